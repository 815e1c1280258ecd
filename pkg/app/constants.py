SCHEMA_VERSION = 1

# Robot swarm: weight of the anchor term for each robot.
ROBOT_COEFFICIENTS = [0.2, 0.2, 0.2, 0.0, 0.0, 0.6, 0.6, 0.6]
ROBOT_INITIAL_X = [0.0, 4.0, 10.0, 6.0, -1.0, 0.0, 12.0, 0.0]
# Published equilibrium for the robot swarm. The communication topology behind it
# is unknown, so it is only compared, never asserted.
ROBOT_PUBLISHED_EQUILIBRIUM = [5.4018, 4.7259, 4.7316, 5.1702, 5.6088, 6.0473, 6.5569, 6.4018]
# Assumed topology for the robot swarm builtin (1-based node ids).
ROBOT_GRAPH = "ring:8"

FIVE_PLAYER_INITIAL_X = [3.0, 0.0, 2.0, 0.0, 0.0]
FIVE_PLAYER_EQUILIBRIUM = [-0.2, -0.2, -0.2, -0.2, -0.2]
FIVE_PLAYER_GRAPH = "ring:5"

DEFAULT_TRAJECTORY_FILE = "trajectory.csv"
DEFAULT_SUMMARY_FILE = "summary.json"
DEFAULT_CHECK_GRID_SIZE = 400
