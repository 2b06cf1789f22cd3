use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use dynrecon::coils::synth_maps;
use dynrecon::io::{
    export_png, load_checkpoint, load_mask, load_maps, load_tensor, save_checkpoint, save_mask, save_maps, save_tensor,
    MaskSource, RunConfig, Window,
};
use dynrecon::learned::{synthetic_samples, train, ConvRecNet};
use dynrecon::metrics::{evaluate, EvalReport};
use dynrecon::phantom::{acquire, generate};
use dynrecon::sampling::{mask_lattice, mask_vista_like};
use dynrecon::solver::ctf_solve;
use dynrecon::{Domain, Error, Mode, NetPair, SamplingMask};

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source }.into())
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

/// The mask named by the `mask` key, on a `frames x lines` grid.
fn resolve_mask(cfg: &RunConfig, frames: usize, lines: usize) -> Result<SamplingMask> {
    let accel = cfg.f64("accel")?;
    let mask = match cfg.mask_source()? {
        MaskSource::Lattice => {
            if accel.fract() != 0.0 || accel < 1.0 {
                return Err(config_error(format!("lattice masks need an integer accel >= 1, got {accel}")));
            }
            mask_lattice(frames, lines, accel as usize, cfg.lattice_offset()?)?
        }
        MaskSource::Vista => mask_vista_like(frames, lines, accel, cfg.vista_params()?)?,
        MaskSource::File(path) => {
            let m = load_mask(&path)?;
            if (m.frames(), m.lines()) != (frames, lines) {
                bail!(Error::Format {
                    path,
                    msg: format!("mask is {}x{}, data needs {frames}x{lines}", m.frames(), m.lines()),
                });
            }
            m
        }
    };
    Ok(mask)
}

pub fn phantom(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let spec = cfg.phantom_spec()?;
    let seed = cfg.u64("seed")?;
    let dir = cfg.path("out_dir")?;
    fs::create_dir_all(&dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
    let gt = generate(&spec)?;
    let maps = synth_maps(cfg.usize("coils")?, spec.rows, spec.cols, seed)?;
    let mask = resolve_mask(cfg, spec.frames, spec.rows)?;
    let v = acquire(&gt, &maps, &mask, cfg.f64("noise")?, seed)?;
    save_tensor(&dir.join("gt.cxt"), &gt)?;
    save_maps(&dir.join("maps.cxt"), &maps)?;
    save_mask(&dir.join("mask.cxt"), &mask)?;
    save_tensor(&dir.join("kdata.cxt"), &v)?;
    println!("wrote {} (acceleration {:.3})", dir.display(), mask.acceleration());
    Ok(())
}

pub fn maps(cfg: &RunConfig) -> Result<()> {
    let coils = cfg.usize("coils")?;
    let maps = synth_maps(coils, cfg.usize("rows")?, cfg.usize("cols")?, cfg.u64("seed")?)?;
    save_maps(&cfg.path("out")?, &maps)?;
    Ok(())
}

pub fn mask(cfg: &RunConfig) -> Result<()> {
    let mask = resolve_mask(cfg, cfg.usize("frames")?, cfg.usize("rows")?)?;
    save_mask(&cfg.path("out")?, &mask)?;
    println!("acceleration {:.4}", mask.acceleration());
    Ok(())
}

pub fn acquire_cmd(cfg: &RunConfig) -> Result<()> {
    let gt = load_tensor(&cfg.path("gt")?, Domain::ImageXt)?;
    let maps = load_maps(&cfg.path("maps")?, true)?;
    let d = gt.dims();
    let mask = resolve_mask(cfg, d.frames, d.rows)?;
    let v = acquire(&gt, &maps, &mask, cfg.f64("noise")?, cfg.u64("seed")?)?;
    save_tensor(&cfg.path("out")?, &v)?;
    Ok(())
}

pub fn recon(cfg: &RunConfig) -> Result<()> {
    let solver = cfg.solver_config()?;
    let v = load_tensor(&cfg.path("input")?, Domain::KspaceKt)?;
    let maps = load_maps(&cfg.path("maps")?, true)?;
    if !cfg.is_set("mask") {
        return Err(config_error("recon needs the mask the data was acquired with (--mask)"));
    }
    let d = v.dims();
    let mask = resolve_mask(cfg, d.frames, d.rows)?;
    let nets = match solver.mode {
        Mode::Learned => Some(load_checkpoint(&cfg.path("ckpt")?)?),
        Mode::Classical => None,
    };
    let (m, state) = ctf_solve(&v, &mask, &maps, &solver, nets.as_ref())?;
    save_tensor(&cfg.path("out")?, &m)?;
    if let Some(path) = cfg.opt_path("trace") {
        if state.trace.is_empty() {
            return Err(config_error("no objective trace in learned mode"));
        }
        let mut csv = String::from("iteration,objective\n");
        for (i, o) in state.trace.iter().enumerate() {
            writeln!(csv, "{i},{o}").expect("string write");
        }
        write_text(&path, &csv)?;
    }
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let mut solver = cfg.solver_config()?;
    solver.mode = Mode::Learned;
    let tc = cfg.train_config()?;
    let samples = synthetic_samples(
        &cfg.phantom_spec()?,
        cfg.usize("coils")?,
        cfg.f64("accel")?,
        cfg.vista_params()?,
        cfg.usize("train_samples")?,
        tc.noise,
    )?;
    if samples.is_empty() {
        return Err(config_error("train_samples must be >= 1"));
    }
    let (xf, xt) = cfg.net_configs()?;
    let seed = cfg.u64("seed")?;
    let mut nets = NetPair {
        xf: ConvRecNet::new(xf, seed.wrapping_mul(2).wrapping_add(1))?,
        xt: ConvRecNet::new(xt, seed.wrapping_mul(2).wrapping_add(2))?,
    };
    let report = train(&mut nets, &samples, &solver, &tc)?;
    save_checkpoint(&cfg.path("out")?, &nets)?;
    if let Some(path) = cfg.opt_path("trace") {
        let mut csv = String::from("step,loss\n");
        for (i, l) in report.step_losses.iter().enumerate() {
            writeln!(csv, "{i},{l}").expect("string write");
        }
        write_text(&path, &csv)?;
    }
    println!(
        "initial_loss {} final_loss {} ratio {:.4}",
        report.initial_loss,
        report.final_loss,
        report.final_loss / report.initial_loss
    );
    Ok(())
}

pub fn eval_csv(r: &EvalReport) -> String {
    let mut csv = String::from("frame,nmse,psnr,ssim,hfen\n");
    for (t, f) in r.per_frame.iter().enumerate() {
        writeln!(csv, "{t},{},{},{},{}", f.nmse, f.psnr, f.ssim, f.hfen).expect("string write");
    }
    writeln!(csv, "all,{},{},{},{}", r.nmse, r.psnr, r.ssim, r.hfen).expect("string write");
    csv
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let x = load_tensor(&cfg.path("input")?, Domain::ImageXt)?;
    let gt = load_tensor(&cfg.path("gt")?, Domain::ImageXt)?;
    let r = evaluate(&x, &gt, cfg.usize("margin")?)?;
    let csv = eval_csv(&r);
    match cfg.opt_path("out") {
        Some(p) => write_text(&p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn parse_window(s: &str) -> Result<Window> {
    if s == "auto" {
        return Ok(Window::default());
    }
    let parsed = s
        .split_once(',')
        .and_then(|(a, b)| Some((a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?)));
    match parsed {
        Some((min, max)) if min <= max => Ok(Window::Fixed { min, max }),
        _ => Err(config_error(format!("window={s:?}: expected auto or MIN,MAX"))),
    }
}

pub fn export(cfg: &RunConfig) -> Result<()> {
    let window = parse_window(cfg.get("window").expect("default"))?;
    let input: PathBuf = cfg.path("input")?;
    let x = load_tensor(&input, Domain::ImageXt)?;
    let frame = cfg.usize("frame")?;
    let d = x.dims();
    if d.coils.is_some() {
        return Err(Error::Format { path: input, msg: "expected a coil-combined image".into() }.into());
    }
    if frame >= d.frames {
        return Err(config_error(format!("frame {frame} out of range (T = {})", d.frames)));
    }
    let img = match cfg.opt_path("gt") {
        Some(p) => x.sub(&load_tensor(&p, Domain::ImageXt)?)?,
        None => x,
    };
    let mag = img.magnitude()?;
    export_png(mag.frame(frame), d.rows, d.cols, &cfg.path("out")?, window)?;
    Ok(())
}
