"""Intent-contrastive sequential recommendation toolkit."""

from .corpus import (Corpus, CorpusError, InteractionSequence, TargetIndex,
                     TrainingInstance, build_target_index, five_core_filter,
                     load_interactions, load_preprocessed, pad_window, reindex,
                     sample_positive, segment, segment_corpus,
                     split_leave_one_out, write_preprocessed)
from .encoder import (EncoderConfig, SequenceEmbedding, SequenceEncoder,
                      SequenceRepr, build_encoder, load_checkpoint,
                      save_checkpoint)
from .evaluation import (EvalReport, evaluate, export_intent_heatmap,
                         inject_noise, metrics_at_k, rank_from_scores,
                         rank_of_truth)
from .intent import (PrototypeSet, fit_prototypes, load_prototypes, query,
                     query_batch, save_prototypes)
from .losses import (ContrastiveBatch, LossBreakdown, cicl_loss, ficl_loss,
                     masked_info_nce, rec_loss, similarity, total_loss)
from .synth import SynthConfig, SynthCorpus, generate, write_synthetic
from .trainer import (NonFiniteLossError, TrainConfig, TrainState, fit,
                      load_train_checkpoint, refresh_prototypes,
                      save_train_checkpoint, train_epoch)

__version__ = "0.1.0"
