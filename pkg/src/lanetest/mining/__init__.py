"""Agreement-rule mining: attribute selection, rule induction, confirmation."""

from .encode import DatasetEncoder, LabeledVector  # noqa: F401
from .forest import (  # noqa: F401
    ImportanceResult,
    RandomForest,
    SelectionResult,
    permutation_importance,
    select_attributes,
    train_forest,
)
from .ripper import Condition, Rule, RuleSet, RipperClassifier, ripper  # noqa: F401
from .confirm import ConfirmedRule, confirm_rule, wilson_ci  # noqa: F401
from .pipeline import MiningReport, mine_pipeline  # noqa: F401
