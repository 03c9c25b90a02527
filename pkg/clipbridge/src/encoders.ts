/**
 * Image encoders. The real path loads a frozen pretrained CLIP vision model
 * (transformers.js) and emits its projected CLS embedding. The
 * "seeded-projection" encoder is a hermetic stand-in for offline pipelines
 * and tests: a fixed random projection of downsampled pixels. It is NOT a
 * CLIP model and carries no semantics; it only shares the contract
 * (deterministic, finite, positive-norm, fixed-width embeddings).
 */

export interface DecodedImage {
  width: number;
  height: number;
  rgb: Uint8Array; // row-major RGB triplets
}

export interface ImageEncoder {
  /** model identifier recorded in the manifest for provenance */
  readonly id: string;
  readonly dim: number;
  embed(image: DecodedImage): Promise<Float64Array>;
}

// Deterministic 32-bit PRNG (mulberry32); good enough to fix a projection.
function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

const PATCH = 32; // images are box-sampled to PATCH x PATCH before projecting

function boxSample(image: DecodedImage): Float64Array {
  const out = new Float64Array(PATCH * PATCH * 3);
  for (let py = 0; py < PATCH; py++) {
    const y0 = Math.floor((py * image.height) / PATCH);
    const y1 = Math.max(y0 + 1, Math.floor(((py + 1) * image.height) / PATCH));
    for (let px = 0; px < PATCH; px++) {
      const x0 = Math.floor((px * image.width) / PATCH);
      const x1 = Math.max(x0 + 1, Math.floor(((px + 1) * image.width) / PATCH));
      let r = 0, g = 0, b = 0, n = 0;
      for (let y = y0; y < y1; y++) {
        for (let x = x0; x < x1; x++) {
          const i = 3 * (y * image.width + x);
          r += image.rgb[i];
          g += image.rgb[i + 1];
          b += image.rgb[i + 2];
          n++;
        }
      }
      const o = 3 * (py * PATCH + px);
      out[o] = r / (255 * n);
      out[o + 1] = g / (255 * n);
      out[o + 2] = b / (255 * n);
    }
  }
  return out;
}

export class SeededProjectionEncoder implements ImageEncoder {
  readonly id: string;
  readonly dim: number;
  private readonly weights: Float64Array;
  private readonly offset: Float64Array;

  constructor(dim = 512, seed = 0x5eed) {
    this.dim = dim;
    this.id = `seeded-projection-v1:dim=${dim},seed=${seed}`;
    const inputs = PATCH * PATCH * 3;
    const rand = mulberry32(seed);
    const scale = 1 / Math.sqrt(inputs);
    this.weights = new Float64Array(dim * inputs);
    for (let i = 0; i < this.weights.length; i++) {
      this.weights[i] = (2 * rand() - 1) * scale;
    }
    // fixed offset keeps norms strictly positive even for constant images
    this.offset = new Float64Array(dim);
    for (let k = 0; k < dim; k++) {
      this.offset[k] = 0.05 * (2 * rand() - 1);
    }
  }

  async embed(image: DecodedImage): Promise<Float64Array> {
    const x = boxSample(image);
    const z = new Float64Array(this.dim);
    const inputs = x.length;
    for (let k = 0; k < this.dim; k++) {
      let acc = this.offset[k];
      const row = k * inputs;
      for (let i = 0; i < inputs; i++) {
        acc += this.weights[row + i] * x[i];
      }
      z[k] = acc;
    }
    return z;
  }
}

export class ClipEncoder implements ImageEncoder {
  readonly id: string;
  readonly dim: number;
  private readonly processor: any;
  private readonly vision: any;
  private readonly RawImage: any;

  private constructor(id: string, dim: number, processor: any, vision: any, RawImage: any) {
    this.id = id;
    this.dim = dim;
    this.processor = processor;
    this.vision = vision;
    this.RawImage = RawImage;
  }

  /** Load a pretrained CLIP vision tower; requires hub access or a local cache. */
  static async create(modelId: string): Promise<ClipEncoder> {
    let mod;
    try {
      mod = await import("@huggingface/transformers");
    } catch (err) {
      throw new Error(
        `model runtime unavailable (install the optional @huggingface/transformers ` +
        `dependency to use pretrained models, or pass --model seeded-projection): ` +
        `${(err as Error).message}`);
    }
    const { AutoProcessor, CLIPVisionModelWithProjection, RawImage } = mod;
    const processor = await AutoProcessor.from_pretrained(modelId);
    const vision = await CLIPVisionModelWithProjection.from_pretrained(modelId);
    const dim = vision.config.projection_dim ?? vision.config.hidden_size;
    return new ClipEncoder(modelId, dim, processor, vision, RawImage);
  }

  async embed(image: DecodedImage): Promise<Float64Array> {
    const raw = new this.RawImage(new Uint8ClampedArray(image.rgb), image.width, image.height, 3);
    const inputs = await this.processor(raw);
    const { image_embeds } = await this.vision(inputs);
    return Float64Array.from(image_embeds.data as Iterable<number>);
  }
}

export async function makeEncoder(model: string, dim: number): Promise<ImageEncoder> {
  if (model === "seeded-projection") {
    return new SeededProjectionEncoder(dim);
  }
  return ClipEncoder.create(model);
}
