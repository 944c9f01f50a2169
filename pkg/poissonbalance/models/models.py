import enum


class CaseTag(enum.Enum):
    ALL_PEELED = "AllPeeled"
    CASE1 = "Case1"
    CASE2 = "Case2"
    CASE3 = "Case3"
    CASE4 = "Case4"
    CASE5 = "Case5"
    DP = "DP"


class TransitionKind(enum.Enum):
    T2 = "T2"
    T3 = "T3"
    T4 = "T4"


class Algorithm(enum.Enum):
    PTAS = "ptas"
    GREEDY = "greedy"
    DET_MEAN = "det-mean"
    DP = "dp"
    BRUTE = "brute"


class GreedyOrder(enum.Enum):
    LPT = "lpt"
    GIVEN = "given"


class VerifySuite(enum.Enum):
    LEMMAS = "lemmas"
    APPENDIX = "appendix"
    IDENTITIES = "identities"
