//! Shipped experiment presets. The exact config and data files live under
//! `presets/` in the repository and are embedded here so `mfld preset NAME`
//! works from any working directory. Every preset initializes the particles
//! from a Gaussian (noted per config file).

pub struct Preset {
    pub name: &'static str,
    pub config: &'static str,
    pub summary: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "gaussian-ld",
        config: include_str!("../presets/gaussian-ld.cfg"),
        summary: "vanilla Langevin on V = ||x||^2/2, d = 2",
    },
    Preset {
        name: "nn-xor",
        config: include_str!("../presets/nn-xor.cfg"),
        summary: "mean-field two-layer tanh net on 4-point xor",
    },
    Preset {
        name: "mmd-1d",
        config: include_str!("../presets/mmd-1d.cfg"),
        summary: "Dirac-particle MMD fit of a two-Gaussian sample",
    },
    Preset {
        name: "ksd-gauss",
        config: include_str!("../presets/ksd-gauss.cfg"),
        summary: "Stein-discrepancy descent toward N(0,1)",
    },
    Preset {
        name: "svrg-sum",
        config: include_str!("../presets/svrg-sum.cfg"),
        summary: "finite-sum quadratic with the anchored estimator",
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

/// Data files referenced by the preset configs, embedded verbatim.
pub fn embedded_data(path: &str) -> Option<&'static str> {
    match path {
        "data/nn-xor.txt" => Some(include_str!("../presets/data/nn-xor.txt")),
        "data/mmd-1d.txt" => Some(include_str!("../presets/data/mmd-1d.txt")),
        _ => None,
    }
}
