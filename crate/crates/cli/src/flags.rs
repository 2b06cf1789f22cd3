//! Command-line surface. Every flag is generated from a configuration key,
//! so each flag (including its aliases) names exactly one key.

use clap::{Arg, ArgAction, Command};
use dynrecon::io::{key_spec, KeyKind, KEYS};

/// Extra long names accepted for a key.
pub const ALIASES: &[(&str, &str)] = &[("mask", "type"), ("accel", "R")];

const PHANTOM_GRID: &[&str] = &["frames", "rows", "cols"];
const MASK_KEYS: &[&str] = &["mask", "accel", "center_band", "density_decay", "lattice_stride"];
const SOLVER_KEYS: &[&str] = &[
    "mode", "nit", "lambda0", "alpha0", "beta0", "tau_xf", "tau_xt", "weights", "alpha", "beta", "gamma", "lambda", "mu",
];

pub struct Subcommand {
    pub name: &'static str,
    pub about: &'static str,
    pub keys: Vec<&'static str>,
}

fn keys(groups: &[&[&'static str]]) -> Vec<&'static str> {
    let mut out: Vec<&'static str> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    out.push("seed");
    out
}

pub fn subcommands() -> Vec<Subcommand> {
    vec![
        Subcommand {
            name: "phantom",
            about: "simulate a phantom and write gt.cxt, maps.cxt, mask.cxt and kdata.cxt to --out-dir",
            keys: keys(&[PHANTOM_GRID, &["coils", "noise"], MASK_KEYS, &["out_dir"]]),
        },
        Subcommand {
            name: "maps",
            about: "synthesize normalized coil sensitivity maps",
            keys: keys(&[&["rows", "cols", "coils", "out"]]),
        },
        Subcommand {
            name: "mask",
            about: "generate a Cartesian (t, ky) sampling mask",
            keys: keys(&[&["frames", "rows"], MASK_KEYS, &["out"]]),
        },
        Subcommand {
            name: "acquire",
            about: "simulate masked multi-coil k-space from a ground-truth image",
            keys: keys(&[&["gt", "maps"], MASK_KEYS, &["noise", "out"]]),
        },
        Subcommand {
            name: "recon",
            about: "reconstruct an image from undersampled k-space",
            keys: keys(&[&["input", "maps"], MASK_KEYS, SOLVER_KEYS, &["ckpt", "out", "trace"]]),
        },
        Subcommand {
            name: "train",
            about: "train the x-f and x-t networks on simulated phantoms",
            keys: keys(&[
                PHANTOM_GRID,
                &["coils", "noise", "accel", "center_band", "density_decay", "train_samples"],
                SOLVER_KEYS,
                &["steps", "lr", "hidden", "layers", "augment", "out", "trace"],
            ]),
        },
        Subcommand {
            name: "eval",
            about: "NMSE, PSNR, SSIM and HFEN against a reference, as CSV",
            keys: keys(&[&["input", "gt", "margin", "out"]]),
        },
        Subcommand {
            name: "export",
            about: "write one frame (or its error map against --gt) as an 8-bit PNG",
            keys: keys(&[&["input", "gt", "frame", "window", "out"]]),
        },
    ]
}

pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

/// Every accepted long flag and the key it sets.
pub fn flag_keys() -> Vec<(String, &'static str)> {
    let mut out: Vec<(String, &'static str)> = KEYS.iter().map(|k| (flag_name(k.name), k.name)).collect();
    out.extend(ALIASES.iter().map(|&(key, alias)| (alias.to_string(), key)));
    out
}

fn key_arg(key: &'static str) -> Arg {
    let spec = key_spec(key).unwrap_or_else(|| panic!("no configuration key {key}"));
    let mut help = spec.help.to_string();
    if let Some(d) = spec.default {
        help.push_str(&format!(" [default: {d}]"));
    }
    let mut arg = Arg::new(key)
        .long(flag_name(key))
        .value_name(key.to_uppercase())
        .help(help)
        .action(ArgAction::Set);
    if let KeyKind::Choice(options) = spec.kind {
        arg = arg.value_parser(options.to_vec());
    }
    for &(k, alias) in ALIASES {
        if k == key {
            arg = arg.visible_alias(alias);
        }
    }
    arg
}

pub fn command() -> Command {
    let mut cmd = Command::new("dynrecon")
        .about("Dynamic MRI reconstruction with complementary x-t / x-f regularization")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for sub in subcommands() {
        let mut c = Command::new(sub.name).about(sub.about).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("key=value file loaded before the other flags"),
        );
        for key in sub.keys {
            c = c.arg(key_arg(key));
        }
        cmd = cmd.subcommand(c);
    }
    cmd
}
