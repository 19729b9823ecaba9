#![no_main]

use libfuzzer_sys::fuzz_target;
use minimax_cli::points::{parse_point, parse_rows};
use minimax_infer::geometry::{distance_dual, distance_primal, FinitelyGeneratedCone};

// Input: generator rows, a line holding only `--`, then the point row.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Some((cone_text, point_text)) = text.split_once("\n--\n") else {
        return;
    };
    let (Ok(gens), Ok(point)) = (parse_rows(cone_text, "cone"), parse_point(point_text, "point")) else {
        return;
    };
    let dim = point.len();
    if gens[0].len() != dim || dim > 8 || point.amax() > 1e6 || gens.iter().any(|g| g.amax() > 1e6) {
        return;
    }
    let Ok(cone) = FinitelyGeneratedCone::new(dim, gens) else {
        return;
    };
    if let (Ok(p), Ok(d)) = (distance_primal(&point, &cone), distance_dual(&point, &cone)) {
        assert!(p >= 0.0 && d >= 0.0);
        assert!(p <= point.norm() * (1.0 + 1e-9) + 1e-9);
    }
});
