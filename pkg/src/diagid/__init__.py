"""Dynamic influence-diagram engine for sequential diagnostic decisions."""

from .construct import (ConstructionTrace, ExtensionRecord, Observation,
                        ObservationSet, VariantChoice, eligible_treatments,
                        extend_with_variables, instantiate, observation_set)
from .diagram import (ChanceNode, DecisionNode, DiagramEdit, InfluenceDiagram,
                      ValueNode, apply_edit, joint_probability,
                      markov_boundary, to_dot, validate_diagram)
from .equivalence import (DEFAULT_QUANTUM, EquivalencePartition,
                          TreatmentSpace, diagram_partition,
                          partition_diagnoses, strongly_equivalent,
                          treatment_space_from_utilities)
from .errors import (CoarseningRejectedError, EditError, EngineError,
                     KbSyntaxError, KbValidationError, MissingCptError,
                     RefinementError, SessionError, TimeRegressionError,
                     UnknownElementError, ZeroEvidenceError)
from .inference import (DecisionReport, Diagnosis, best_decision,
                        diagnosis_posterior, diagnosis_space,
                        expected_utility, make_diagnosis, marginal, posterior)
from .kb import (Cpt, CptBank, KnowledgeBase, TimeAxis, Treatment,
                 TriggerRule, TriggerStep, UtilityTable, Variable, Violation,
                 justification_trace, match_triggers, validate_kb)
from .kbformat import parse_coarsening, parse_kb, parse_refinement, serialize_kb
from .sensitivity import (Challenger, SensitivityReport, analyze,
                          classify_update, default_candidates)
from .session import (SessionState, act, feedback, new_session, observe,
                      parse_script, recommend, replay)
from .update import (CoarseningMap, RefinementMap, UpdatePlan, UpdateStep,
                     apply_plan, coarsen_node, extend_topology, plan_update,
                     proportional_fragments, refine_node,
                     update_probabilities, verify_refinement)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
