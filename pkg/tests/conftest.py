import pytest

from streamdds.msgdef import TypeRegistry, parse_msg_file


POINT_SRC = "float64 x\nfloat64 y\nfloat64 z\n"
POSE_SRC = "Point position\nfloat64[4] orientation\n"

# six hardware nodes on two topics: A has three publishers and three
# subscribers (one with a FIFO), B has one publisher and two subscribers
SIX_NODE_CONFIG = """\
# six nodes, two topics
node hw1
  pub A demo/Img
  sub B demo/Img
node hw2
  pub A demo/Img
  sub B demo/Img
node hw3
  pub A demo/Img
node hw4
  sub A demo/Img fifo=8
node hw5
  sub A demo/Img
  pub B demo/Img
node hw6
  sub A demo/Img
"""


@pytest.fixture
def geometry_registry() -> TypeRegistry:
    reg = TypeRegistry()
    reg.register(parse_msg_file(POINT_SRC, "geometry_msgs/Point"))
    reg.register(parse_msg_file(POSE_SRC, "geometry_msgs/Pose"))
    return reg.resolve()


@pytest.fixture
def img_registry() -> TypeRegistry:
    reg = TypeRegistry()
    reg.register(parse_msg_file("uint8[16] data\n", "demo/Img"))
    return reg.resolve()


@pytest.fixture
def six_node_config() -> str:
    return SIX_NODE_CONFIG
