"""Services package."""
from app.services.base_service import BaseService
from app.services.corpus_service import CorpusService
from app.services.diagnostics_service import DiagnosticsService
from app.services.entropy_service import EntropyService
from app.services.gradcheck_service import GradcheckService
from app.services.loss_service import LossService
from app.services.metrics_service import MetricsSink
from app.services.optimizer_service import OptimizerService
from app.services.oracle_service import OracleService
from app.services.trainer_service import TrainerService
from app.services.transformer_service import TransformerService

__all__ = [
    "BaseService",
    "CorpusService",
    "DiagnosticsService",
    "EntropyService",
    "GradcheckService",
    "LossService",
    "MetricsSink",
    "OptimizerService",
    "OracleService",
    "TrainerService",
    "TransformerService",
]
