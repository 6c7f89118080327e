"""Toy end-to-end training: synthetic motion, a small conv predictor,
Charbonnier loss and Adam, exercising every gradient path of the operator."""

from .predictor import PredictorCfg, ToyPredictor, predictor_forward
from .synth import PATTERNS, MOTIONS, SynthSample, SynthSpec, synth_generate, synth_stream
from .train import (
    Adam,
    AdamCfg,
    CharbonnierCfg,
    EvalReport,
    TrainResult,
    build_predictor,
    charbonnier_loss,
    charbonnier_with_grad,
    effective_time,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "Adam",
    "AdamCfg",
    "CharbonnierCfg",
    "EvalReport",
    "MOTIONS",
    "PATTERNS",
    "PredictorCfg",
    "SynthSample",
    "SynthSpec",
    "ToyPredictor",
    "TrainResult",
    "build_predictor",
    "charbonnier_loss",
    "charbonnier_with_grad",
    "effective_time",
    "evaluate",
    "load_checkpoint",
    "predictor_forward",
    "save_checkpoint",
    "synth_generate",
    "synth_stream",
    "train",
]
