// Minimal ambient types for the optional CLIP dependency so the package
// compiles when the model runtime is not installed (offline environments).
declare module "@huggingface/transformers" {
  export const AutoProcessor: any;
  export const CLIPVisionModelWithProjection: any;
  export const RawImage: any;
}
