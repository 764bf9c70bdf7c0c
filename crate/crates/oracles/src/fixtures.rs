//! Measurement tables from the worked spinal-cord-injury example.

/// One group, five subjects, five time points (baseline, days 4/7/14/21).
pub const LEFT_HEMI: [[f64; 5]; 5] = [
    [1.0, 1.2442, 1.6132, 1.2916, 1.2916],
    [1.0, 0.964, 1.8748, 1.5555, 1.5555],
    [1.0, 0.9318, 0.8811, 0.9753, 0.5691],
    [1.0, 1.2502, 1.1113, 1.2712, 0.7921],
    [1.0, 1.9395, 1.4037, 1.5248, 0.9224],
];

pub const RIGHT_HEMI: [[f64; 5]; 5] = [
    [1.0, 1.1107, 0.5734, 0.7837, 0.747],
    [1.0, 0.9328, 1.0583, 0.4739, 0.4917],
    [1.0, 1.0061, 1.4217, 0.624, 0.6284],
    [1.0, 0.6884, 0.9345, 0.4775, 0.7082],
    [1.0, 0.1542, 0.6776, 0.4507, 0.1745],
];

pub const COMPLETE: [[f64; 5]; 5] = [
    [1.0, 0.1989, 0.193, 1.1714, 0.6429],
    [1.0, 0.1593, 0.1111, 0.274, 0.2158],
    [1.0, 0.1013, 0.3434, 0.0867, 0.0223],
    [1.0, 0.1489, 0.0604, 0.0837, 0.0678],
    [1.0, 0.4105, 0.2151, 0.0001, 0.0366],
];

pub fn to_rows(block: &[[f64; 5]; 5]) -> Vec<Vec<f64>> {
    block.iter().map(|r| r.to_vec()).collect()
}

/// The single-group table as nested rows.
pub fn one_group() -> Vec<Vec<Vec<f64>>> {
    vec![to_rows(&LEFT_HEMI)]
}

/// The three-group table as nested rows.
pub fn three_groups() -> Vec<Vec<Vec<f64>>> {
    vec![to_rows(&LEFT_HEMI), to_rows(&RIGHT_HEMI), to_rows(&COMPLETE)]
}
