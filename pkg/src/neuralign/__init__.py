"""neuralign: contrastive alignment of multi-subject neural recordings into a
frozen image-embedding space, plus cosine-similarity decoding, encoding and
cross-modality retrieval."""

from .contrastive import contrastive_loss, l2_normalize, make_targets, similarity_logits
from .datastore import (NeuralSample, PairedDataset, StimulusRecord,
                        SyntheticConfig, generate_synthetic, load_checkpoint,
                        load_dataset, load_stimulus_table, read_tensor,
                        save_checkpoint, save_dataset, write_tensor)
from .encoders import (Activation, Conv1d, EncoderConfig, GlobalMeanPool,
                       Linear, ModalityEncoder, ModalityKind, Pool1d,
                       align_forward, default_config, encode, encode_batch,
                       encoder_backward, init_encoder, small_config)
from .metrics import (EvalProtocol, MetricReport, chance_baseline,
                      evaluate_experiment, normalized_conversion_accuracy,
                      topk_class_accuracy, two_way_accuracy)
from .retrieval import (RetrievalIndex, build_index, build_image_index,
                        build_neural_index, convert, decode, encode_retrieve,
                        top_k)
from .training import (AdamWState, TrainConfig, adamw_step, evaluation_loss,
                       fit, init_adamw_state, make_batches, train_epoch)

__version__ = "0.1.0"
