"""Evacuation planning and recovery for drone light shows hit by in-flight failures."""

from .dynamics import (
    Action,
    DroneState,
    FailureKind,
    FailureMode,
    KinematicLimits,
    Plan,
    Show,
    Status,
    Trajectory,
    execute_plan,
    generate_show,
    simulate_failure,
    step,
)
from .errors import (
    DroneParkingError,
    EmptyOccupancyError,
    HistoryTooShortError,
    InfeasibleActionError,
    OffStageError,
    PlannerCapacityError,
    ScenarioError,
)
from .grid import (
    CellSet,
    GridCell,
    StageConfig,
    Tile,
    ZoneSet,
    cell_of_point,
    footprint_of_plan,
    footprint_of_pose,
    footprint_of_trajectory,
    plans_collide,
)
from .harness import (
    IncidentReport,
    Metrics,
    ScenarioSpec,
    evaluate_batch,
    random_scenario,
    run_baseline,
    run_incident,
)
from .occupancy import (
    IncidentZones,
    OccupancyField,
    combine_occupancy,
    estimate_occupancy,
    fall_zone,
    hit_zone,
    incident_end_time,
    parking_space,
    safe_probability,
)
from .planner import (
    EvacuationPlan,
    FormationPlan,
    PlanGraph,
    PlannerSettings,
    assemble_formation,
    edge_weight,
    extract_plan,
    grow_graph,
    plan_evacuation,
    select_evacuees,
    shortest_paths,
)
from .predictor import PhysicsEnsemblePredictor, PoseHistory, RolloutSet, estimate_state, predict_rollouts
from .recovery import (
    RecoveryAssignment,
    Vacancy,
    assign_hidden,
    find_vacancies,
    plan_recovery,
    resume_show,
)

__version__ = "0.1.0"
