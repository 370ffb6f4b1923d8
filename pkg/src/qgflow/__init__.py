"""Multi-agent math question generation conditioned on an educational goal."""

from .agents import Agents, DesignPlan, Direction
from .config import RunConfig, build_agents, build_gateway, build_store, load_config
from .core import (
    CandidateRecord,
    Difficulty,
    DimensionVerdict,
    EducationalGoal,
    EvaluationReport,
    Question,
    QuestionType,
    build_pass_set,
    select_final,
)
from .evaluation import judge_consistency, winrate_matrix
from .gateway import Gateway, PriceTable, UsageLedger, extract_structured
from .knowledge import KnowledgeStore, ingest_bank
from .metrics import bleu, diversity_report, meteor_lite, rouge_l, tokenize
from .mock import ScriptedProvider, SimulatedResponder
from .orchestrator import ABLATIONS, GenerationTrace, Pipeline, PipelineConfig, TerminalStatus, run_batch, run_pipeline

__version__ = "0.1.0"
