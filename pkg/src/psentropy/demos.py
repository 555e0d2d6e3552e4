"""Built-in demo configurations (TOML text, identical to ``configs/*.toml``).

Growth rates are kept near 0.1 to 0.3 so the spanning counts stay resolvable on
grids of a few hundred points over horizons up to 24.
"""
from __future__ import annotations

from .config import ExperimentConfig, loads_config

_HORIZONS = "[4.0, 8.0, 12.0, 16.0, 20.0, 24.0]"

DEMOS = {
    "linear-1d": f"""\
config_version = 1
name = "linear-1d"
seed = 0

[system]
kind = "linear"
A = [[0.1]]
B = [[1.0]]
rho = 2.0

[gamma]
lower = [-0.5]
upper = [0.5]
points = [801]

[zeta]
alpha = 0.5
M = 2.0

[feedback]
kind = "linear"
K = [[-1.1]]

[spanning]
epsilon = 0.1
mode = "practical"
horizons = {_HORIZONS}
dt = 0.05
control_step = 0.1

[comparison]
horizons = [1.0, 2.0, 3.0, 4.0, 5.0]
points = [401]
""",
    "linear-2d": f"""\
config_version = 1
name = "linear-2d"
seed = 0

[system]
kind = "linear"
A = [[0.1, 1.0], [0.0, -1.0]]
B = [[0.0], [1.0]]
rho = 3.0

[gamma]
lower = [-0.5, -0.05]
upper = [0.5, 0.05]
points = [201, 3]

[zeta]
alpha = 0.5
M = 2.0

[feedback]
kind = "linear"
K = [[-2.31, -2.1]]

[spanning]
epsilon = 0.1
mode = "practical"
horizons = {_HORIZONS}
dt = 0.05

[comparison]
horizons = [1.0, 2.0, 3.0, 4.0]
points = [41, 3]
""",
    "quadratic-5.2": f"""\
config_version = 1
name = "quadratic-5.2"
seed = 0

[system]
kind = "quadratic"
rho = 1.0

[system.params]
lam = 0.1
alpha0 = 0.5
beta0 = 0.5
gamma0 = -1.0

[gamma]
lower = [0.2]
upper = [0.4]
points = [401]

[zeta]
synthesized = true

[feedback]
kind = "synthesized"

[synthesis]
alpha = 0.2
T_fit = 20.0
dt = 0.01
grid_points = 101

[spanning]
epsilon = 0.2
mode = "practical"
horizons = {_HORIZONS}
dt = 0.01

[verify]
T = 20.0

[sweep]
start = 100.0
stop = 1000000.0
num = 20

[comparison]
alpha = 0.1
horizons = [6.0, 9.0, 12.0, 15.0]
points = [201]
""",
    "cubic-5.3": f"""\
config_version = 1
name = "cubic-5.3"
seed = 0

[system]
kind = "cubic"
rho = 1.0

[system.params]
lam = 0.1
alpha0 = 0.1
beta0 = 0.02
gamma0 = 1.0
alpha1 = 0.0
beta1 = 0.0
gamma1 = 0.05
eta1 = 1.0

[gamma]
lower = [-0.1]
upper = [0.1]
points = [401]

[zeta]
synthesized = true

[feedback]
kind = "synthesized"

[synthesis]
alpha = 0.05
T_fit = 20.0
dt = 0.01
grid_points = 101

[spanning]
epsilon = 0.2
mode = "practical"
horizons = {_HORIZONS}
dt = 0.01

[verify]
T = 20.0

[sweep]
start = 100.0
stop = 100000.0
num = 20
""",
    "chain-5.4": f"""\
config_version = 1
name = "chain-5.4"
seed = 0

[system]
kind = "chain"
rho = 4.0

[system.params]
d = 2
lam = 0.1
alpha0 = 0.5
beta0 = 0.0
gammas = [-1.0]
k1 = -16.0
K2 = [-4.0]

[gamma]
lower = [0.05, -0.05]
upper = [0.15, 0.05]
points = [21, 21]

[zeta]
synthesized = true

[feedback]
kind = "synthesized"

[synthesis]
alpha = 0.05
T_fit = 40.0
dt = 0.01

[spanning]
epsilon = 0.1
mode = "practical"
horizons = {_HORIZONS}
dt = 0.05

[verify]
T = 40.0
dt = 0.01
""",
}


def list_demos() -> list[str]:
    return list(DEMOS)


def demo_text(name: str) -> str:
    try:
        return DEMOS[name]
    except KeyError:
        raise KeyError(f"unknown demo {name!r}; choose from {', '.join(DEMOS)}") from None


def load_demo(name: str) -> ExperimentConfig:
    return loads_config(demo_text(name))
