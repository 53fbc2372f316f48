"""Reference clinical-study fixtures: per-patient heartbeat counts and the
published per-fold accuracy tables used to pin the aggregation arithmetic."""

CLINICAL_BEAT_COUNTS = {
    "P1": 95, "P2": 90, "P3": 114, "P4": 108, "P5": 108, "P6": 108, "P7": 100,
    "P8": 162, "P9": 108, "P10": 98, "P11": 157, "P12": 66, "P13": 107,
    "P14": 108, "P15": 101, "P16": 107, "P17": 34, "P18": 152, "P19": 107,
    "P20": 106, "P21": 108, "P22": 165, "P23": 164, "P24": 168, "P25": 96,
    "P26": 165, "P27": 107, "P28": 162, "P29": 108, "P30": 108, "P31": 103,
    "P32": 108, "P33": 167, "P34": 167, "P35": 168, "P36": 168, "P37": 168,
    "P38": 106, "P39": 160,
}

# columns: TV, MV, LPV, CT, cross-view fusion; one row per fold
CLINICAL_VAL_TABLE = [
    (72.73, 90.90, 63.63, 54.54, 72.73),
    (75.00, 83.33, 66.67, 50.00, 75.00),
    (75.00, 91.67, 83.33, 81.81, 91.67),
    (66.67, 66.67, 66.67, 58.33, 75.00),
    (70.00, 80.00, 100.00, 80.00, 90.00),
    (70.00, 58.33, 50.00, 41.66, 66.67),
    (75.00, 91.67, 91.67, 75.00, 83.33),
    (66.67, 75.00, 66.67, 58.33, 66.67),
    (75.00, 66.67, 58.33, 60.00, 75.00),
    (66.67, 66.67, 83.33, 70.00, 66.67),
]
CLINICAL_VAL_MEANS = (71.27, 77.09, 73.03, 62.97, 76.27)

CLINICAL_TEST_TABLE = [
    (50.00, 75.00, 75.00, 50.00, 83.33),
    (63.63, 45.45, 63.63, 54.54, 63.64),
    (58.33, 66.67, 41.67, 50.00, 66.67),
    (66.67, 75.00, 83.33, 72.72, 66.67),
    (66.67, 58.33, 66.67, 58.33, 66.67),
    (70.00, 80.00, 70.00, 60.00, 90.00),
    (40.00, 50.00, 50.00, 50.00, 41.67),
    (75.00, 75.00, 58.33, 58.33, 66.67),
    (66.67, 66.67, 66.67, 33.33, 58.33),
    (58.33, 58.33, 58.33, 60.00, 58.33),
]
CLINICAL_TEST_MEANS = (61.53, 65.05, 63.36, 54.73, 66.20)
