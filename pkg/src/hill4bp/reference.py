"""Published reference values used by the regression checks.

Coordinates are velocity form (x, y, xdot, ydot).  Sign-paired entries are
stored with the upper sign.
"""

X_STARS = (0.615, 0.62, 0.625, 0.63)

H_L1 = -2.16286

# x*: (h, ydot*, T)
LYAPUNOV_ORBITS = {
    0.615: (-2.07715457, 0.48123483, 3.05967299),
    0.62: (-2.08671819, 0.45248801, 3.05678890),
    0.625: (-2.09582648, 0.42353750, 3.05406407),
    0.63: (-2.10446079, 0.39437305, 3.05150060),
}

# symmetric points on y = 0: x*: (x, y, xdot, ydot)
HOMOCLINIC_POINTS = {
    "hom-z1": {
        0.615: (-0.14646739, 0.0, 0.0, -3.09272039),
        0.62: (-0.13707337, 0.0, 0.0, -3.23629663),
        0.625: (-0.12723761, 0.0, 0.0, -3.40227909),
        0.63: (-0.11666113, 0.0, 0.0, -3.60215892),
    },
    "hom-z2": {
        0.615: (-0.02675921, 0.0, 0.0, -8.40169252),
        0.62: (-0.03085457, 0.0, 0.0, -7.78778643),
        0.625: (-0.03563430, 0.0, 0.0, -7.20679133),
        0.63: (-0.04141244, 0.0, 0.0, -6.64009686),
    },
}

# symmetric points on x = 0 (z; the partner is the x-axis reflection)
HETEROCLINIC_POINTS = {
    "het-z1": {
        0.615: (0.0, -0.32513154, 1.41324947, 0.0),
        0.62: (0.0, -0.31736214, 1.45901631, 0.0),
        0.625: (0.0, -0.30951753, 1.50672557, 0.0),
        0.63: (0.0, -0.30157444, 1.55664227, 0.0),
    },
    "het-z2": {
        0.615: (0.0, -0.13480207, 3.26837828, 0.0),
        0.62: (0.0, -0.13957356, 3.18684274, 0.0),
        0.625: (0.0, -0.14460595, 3.10468687, 0.0),
        0.63: (0.0, -0.14991892, 3.02186543, 0.0),
    },
}

# foot-point rows: x*: ((x, y, xdot, ydot) of the + foot-point, |theta|)
# the points are the orbit anchors; the heteroclinic "-" row is the x -> -x mirror
FOOTPOINTS = {
    "hom-z1": {
        0.615: ((0.61500027, -0.00000005, -0.00000100, 0.48123436), 0.27849625),
        0.62: ((0.62000004, -0.00000011, -0.00000028, 0.45248794), 0.28369125),
        0.625: ((0.62500023, -0.00000006, -0.00000083, 0.42353712), 0.29106293),
        0.63: ((0.63000040, -0.00000000, 0.00000132, 0.39437240), 0.30161988),
    },
    "hom-z2": {
        0.615: ((0.61499366, 0.00000076, 0.00001982, 0.48124537), 0.49677491),
        0.62: ((0.61999254, 0.00000079, 0.00002317, 0.45250024), 0.48835256),
        0.625: ((0.62499943, -0.00000216, 0.0000008, 0.42353842), 0.47799047),
        0.63: ((0.63000023, 0.00000018, 0.0000008, 0.39437267), 0.46465922),
    },
    "het-z1": {
        0.615: ((0.61500108, 0.00000001, 0.00000360, 0.48123302), 0.56696772),
        0.62: ((0.62000004, 0.00000010, 0.00000045, 0.45248793), 0.55400246),
        0.625: ((0.62500059, 0.00000015, 0.00000215, 0.42353653), 0.54075381),
        # printed with the opposite sign pair; the mirror convention of the other rows is used
        0.63: ((0.63000045, 0.00000009, 0.00000163, 0.39437232), 0.52702772),
    },
    "het-z2": {
        0.615: ((0.61499894, -0.00000004, 0.00000329, 0.48123659), 0.04588521),
        0.62: ((0.61999901, -0.00000003, 0.00000316, 0.45248962), 0.05160310),
        0.625: ((0.62499909, -0.00000000, 0.00000300, 0.42353896), 0.05811547),
        0.63: ((0.62999918, -0.00000002, 0.00000285, 0.39437436), 0.06560153),
    },
}

# int_0^1 -dS/dtheta(x*, theta + Delta) dtheta for the z1 channels
BIRKHOFF_INTEGRALS = {
    "hom-z1": {0.615: 4.504268037535489, 0.62: 4.522975396978230, 0.625: 4.530206829459286, 0.63: 4.546613141589633},
    "het-z1": {0.615: 6.185282908819167, 0.62: 6.375516217294260, 0.625: 6.551536879012402, 0.63: 6.713775974499518},
}

SINGLE_MAP_BOUNDS = {"hom-z1": 4.50, "het-z1": 6.18}
SINGLE_MAP_CONSTANTS = {"hom-z1": 0.0675, "het-z1": 0.0927}
TWO_MAP_THRESHOLDS = {"hom": 1.8, "het": 7.0}
