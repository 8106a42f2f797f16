//! Benchmark call graphs.
//!
//! All benchmark costs live in [`PRESET_TABLE`]. Work is in abstract work
//! units, data in bytes. A seed perturbs the heavy entries by at most ±10%
//! (work ≥ [`JITTER_MIN_WORK`], bytes ≥ [`JITTER_MIN_BYTES`]); negligible
//! methods are never perturbed, so the placement facts the presets encode
//! hold for every seed:
//!
//! * integral: `D` does one work unit and returns 400 KB to the pinned exit,
//!   so shipping it anywhere costs a large transfer back to the source.
//! * determinant: `B` and `C` do one work unit each but receive 256 KB
//!   matrix halves from the pinned entry.
//! * montecarlo / facerec: most of the work sits in a few sampling or
//!   projection methods; their bulky intermediates go to the method that
//!   runs right after them.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_graph, CallGraph, MethodId, MethodNode};
use crate::error::GraphError;

pub const JITTER_MIN_WORK: u64 = 50;
pub const JITTER_MIN_BYTES: u64 = 8 * 1024;
const JITTER: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Integral,
    Determinant,
    Montecarlo,
    Facerec,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] = [
        Benchmark::Integral,
        Benchmark::Determinant,
        Benchmark::Montecarlo,
        Benchmark::Facerec,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Integral => "integral",
            Benchmark::Determinant => "determinant",
            Benchmark::Montecarlo => "montecarlo",
            Benchmark::Facerec => "facerec",
        }
    }

    fn salt(self) -> u64 {
        match self {
            Benchmark::Integral => 0x1a7e_9a11,
            Benchmark::Determinant => 0xde7e_5a17,
            Benchmark::Montecarlo => 0x3c0a_11e0,
            Benchmark::Facerec => 0xface_7ec0,
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "integral" => Ok(Benchmark::Integral),
            "determinant" => Ok(Benchmark::Determinant),
            "montecarlo" => Ok(Benchmark::Montecarlo),
            "facerec" => Ok(Benchmark::Facerec),
            other => Err(GraphError::UnknownBenchmark(other.to_string())),
        }
    }
}

/// (method, work units, pinned, [(successor, bytes)])
pub type PresetRow = (&'static str, u64, bool, &'static [(&'static str, u64)]);

pub const INTEGRAL: &[PresetRow] = &[
    ("A", 2, true, &[("B", 2048)]),
    ("B", 1200, false, &[("C", 1024), ("D", 1024)]),
    ("C", 2, true, &[]),
    ("D", 1, false, &[("C", 409_600)]),
];

pub const DETERMINANT: &[PresetRow] = &[
    ("A", 3, true, &[("B", 262_144), ("C", 262_144)]),
    ("B", 1, false, &[("D", 2048)]),
    ("C", 1, false, &[("D", 2048)]),
    ("D", 900, false, &[("E", 1024)]),
    ("E", 2, true, &[]),
];

pub const MONTECARLO: &[PresetRow] = &[
    ("main", 2, true, &[("config", 512)]),
    ("config", 4, false, &[("seed_rng", 256)]),
    ("seed_rng", 6, false, &[("draw_0", 1024), ("draw_1", 1024), ("draw_2", 1024)]),
    ("draw_0", 360, false, &[("accumulate_0", 65_536)]),
    ("draw_1", 360, false, &[("accumulate_1", 65_536)]),
    ("draw_2", 360, false, &[("accumulate_2", 65_536)]),
    ("accumulate_0", 10, false, &[("merge", 512)]),
    ("accumulate_1", 10, false, &[("merge", 512)]),
    ("accumulate_2", 10, false, &[("merge", 512)]),
    ("merge", 8, false, &[("histogram", 4096)]),
    ("histogram", 30, false, &[("mean", 2048)]),
    ("mean", 6, false, &[("variance", 1024)]),
    ("variance", 12, false, &[("confidence", 1024)]),
    ("confidence", 20, false, &[("format", 1024)]),
    ("format", 8, false, &[("report", 1024)]),
    ("report", 2, true, &[]),
];

pub const FACEREC: &[PresetRow] = &[
    ("main", 2, true, &[("load_image", 1024)]),
    ("load_image", 10, false, &[("decode", 204_800)]),
    ("decode", 20, false, &[("grayscale", 921_600)]),
    ("grayscale", 15, false, &[("equalize", 307_200)]),
    ("equalize", 15, false, &[("detect_faces", 307_200)]),
    ("detect_faces", 300, false, &[("crop", 307_200)]),
    ("crop", 10, false, &[("resize", 65_536)]),
    ("resize", 10, false, &[("normalize", 16_384)]),
    ("normalize", 10, false, &[("mean_face", 16_384)]),
    (
        "mean_face",
        40,
        false,
        &[("project_0", 16_384), ("project_1", 16_384), ("project_2", 16_384), ("project_3", 16_384)],
    ),
    ("project_0", 150, false, &[("distance_0", 2048)]),
    ("project_1", 150, false, &[("distance_1", 2048)]),
    ("project_2", 150, false, &[("distance_2", 2048)]),
    ("project_3", 150, false, &[("distance_3", 2048)]),
    ("distance_0", 20, false, &[("argmin", 64)]),
    ("distance_1", 20, false, &[("argmin", 64)]),
    ("distance_2", 20, false, &[("argmin", 64)]),
    ("distance_3", 20, false, &[("argmin", 64)]),
    ("argmin", 5, false, &[("label", 64)]),
    ("label", 3, false, &[("respond", 256)]),
    ("respond", 2, true, &[]),
];

pub const PRESET_TABLE: &[(Benchmark, &[PresetRow])] = &[
    (Benchmark::Integral, INTEGRAL),
    (Benchmark::Determinant, DETERMINANT),
    (Benchmark::Montecarlo, MONTECARLO),
    (Benchmark::Facerec, FACEREC),
];

fn rows(b: Benchmark) -> &'static [PresetRow] {
    PRESET_TABLE.iter().find(|(k, _)| *k == b).map(|(_, r)| *r).unwrap()
}

fn jitter(rng: &mut ChaCha8Rng, value: u64, threshold: u64) -> u64 {
    // Draw unconditionally so the stream position does not depend on values.
    let f = 1.0 + rng.gen_range(-JITTER..=JITTER);
    if value >= threshold {
        (value as f64 * f).round() as u64
    } else {
        value
    }
}

/// Deterministic benchmark graph for `seed`.
pub fn benchmark(name: Benchmark, seed: u64) -> CallGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ name.salt());
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for &(id, work, pinned, outs) in rows(name) {
        let mut node = MethodNode::new(id, jitter(&mut rng, work, JITTER_MIN_WORK));
        node.pinned = pinned;
        for &(to, bytes) in outs {
            node.out_data
                .insert(MethodId::new(to), jitter(&mut rng, bytes, JITTER_MIN_BYTES));
            edges.push((MethodId::new(id), MethodId::new(to)));
        }
        nodes.push(node);
    }
    build_graph(nodes, edges).expect("preset tables are valid DAGs")
}
