"""Stack-allocation safety analysis: function pass, module fixpoint, classification."""

from .classify import (
    TFP_CHECK,
    TFP_CLEAR,
    TFP_KEEPTAG,
    TFP_NONE,
    TFP_UNTAG,
    AllocaResult,
    AnalysisOptions,
    AnalysisResult,
    analyze,
    check_pointer_safety,
    classify,
)
from .function_pass import DEFAULT_PURE_EXTERNS, MUTATIONS, FunctionFacts, detect_linear_access, pointer_roots, run_function_pass
from .module_pass import DEFAULT_LIMIT, ModuleStats, run_module_pass
from .ranges import EMPTY, FULL, ByteRange
from .safety import GUARDED, IMPLICIT, PROVABLE, UNSAFE, SafetyClass
from .useinfo import LinearAccessInfo, UseInfo, merge_use_info

__all__ = [
    "AllocaResult",
    "AnalysisOptions",
    "AnalysisResult",
    "ByteRange",
    "DEFAULT_LIMIT",
    "DEFAULT_PURE_EXTERNS",
    "EMPTY",
    "FULL",
    "FunctionFacts",
    "GUARDED",
    "IMPLICIT",
    "LinearAccessInfo",
    "MUTATIONS",
    "ModuleStats",
    "PROVABLE",
    "SafetyClass",
    "TFP_CHECK",
    "TFP_CLEAR",
    "TFP_KEEPTAG",
    "TFP_NONE",
    "TFP_UNTAG",
    "UNSAFE",
    "UseInfo",
    "analyze",
    "check_pointer_safety",
    "classify",
    "detect_linear_access",
    "merge_use_info",
    "pointer_roots",
    "run_function_pass",
    "run_module_pass",
]
