"""eqakit: a desk-scale embodied question answering harness.

Symbolic 3-D scenes on occupancy grids, a closed tool-calling action
space, deterministic task and trajectory generation, episode replay, and
path-weighted evaluation metrics, all driven from one seed.
"""

from .scene import (
    CameraParams,
    Pose,
    Region,
    Scene,
    SceneObject,
    SceneValidationError,
    forward_vector,
    is_visible,
    load_scene,
    project_bbox,
)
from .planning import (
    Direction,
    GridPath,
    NoPathError,
    PlanningError,
    astar,
    multi_target_route,
    path_length,
    path_to_directions,
    traveled_length,
)
from .actions import ActionParseError, ActionProgram, ToolCall, ToolSpec, TOOL_SPECS, parse_action
from .runtime import (
    EpisodeResult,
    EpisodeState,
    Observation,
    Plan,
    execute_tool,
    make_plan,
    run_episode,
)
from .tasks import (
    EqaTask,
    QUESTION_TYPES,
    TaskGenConfig,
    TaskVerdict,
    check_task_integrity,
    generate_tasks,
    verify_task,
)
from .trajectory import (
    Step,
    Trajectory,
    TrajectoryVerdict,
    export_sft,
    replay_trajectory,
    sample_for_training,
    synthesize_trajectory,
    verify_trajectory,
)
from .metrics import (
    EpisodeSample,
    EvalReport,
    JudgeScore,
    MetricConfig,
    TokenF1Judge,
    build_report,
    e_path_at_d,
    llm_match_score,
    mcq_success,
    path_efficiency_factor,
    recall_at_d,
)
from .controllers import HeuristicController, OracleController
from .ports import (
    ControllerSpec,
    HttpPort,
    LineProcessPort,
    PortError,
    WireController,
    WirePlanner,
    make_controller,
    parse_controller_spec,
)
from .bundles import bundled_scene_ids, load_bundled_scene, load_suite

__version__ = "0.1.0"
