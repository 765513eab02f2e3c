"""CNN, LSTM and C-LSTM sentence classifiers on a small numpy autodiff engine."""

from .autodiff import Tensor, concat, embedding, softmax_cross_entropy, unfold_time
from .layers import Adam, adam_update, conv1d, dropout, lstm_step, max_over_time
from .models import (
    ARCHITECTURES,
    CLstmConfig,
    CnnConfig,
    LstmConfig,
    NeuralError,
    TrainedClassifier,
    make_config,
    predict_classifier,
    train_classifier,
)

__all__ = [
    "Tensor", "concat", "embedding", "softmax_cross_entropy", "unfold_time",
    "Adam", "adam_update", "conv1d", "dropout", "lstm_step", "max_over_time",
    "ARCHITECTURES", "CLstmConfig", "CnnConfig", "LstmConfig", "NeuralError",
    "TrainedClassifier", "make_config", "predict_classifier", "train_classifier",
]
