//! `trajectory`: Bloch-sphere paths of both qubits under an N-step run.
//!
//! The protocol rotates the data qubit about the instruction state's
//! Bloch axis by θ/N per step; plotting σ(n) against the continuous
//! ideal rotation is the most direct picture of what the instruction
//! does. Each prefix of length n is treated as its own experiment of
//! depth 6n+1 — exactly how the points would be taken on hardware — so
//! noisy trajectories accumulate decoherence with depth.
//!
//! Modes: `refresh` resets the instruction after every step (the ideal
//! protocol), `enumerate` averages all 2^N coin histories of the
//! randomized protocol, `sample` draws coin masks at random. Sampling at
//! least as many masks as exist falls back to enumeration, which is both
//! cheaper and exact. With `--shots K` every reported state is first
//! reconstructed by K-shot state tomography instead of being read off
//! the simulator.

use clap::{Args, ValueEnum};
use qinstr::analysis::AnalysisSeries;
use qinstr::compile::build_dme2_circuit;
use qinstr::dme::{self, DmeConfig, QmeMask, MASK_ENUM_LIMIT};
use qinstr::linalg::{CMatrix, Keep};
use qinstr::noise::{simulate_dme2_averaged, simulate_noisy, NoiseParams};
use qinstr::qstate::{bloch, state_fidelity, DensityMatrix};
use qinstr::seeding::derive_seed;
use qinstr::tomography::{beta_from_readout, measure_all, state_tomography, ReadoutModel};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::common::{parse_state, CliResult, CommonOpts, NoiseChoice, ShotMode};
use crate::record::{series_payload, CommandOutput, CsvTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TrajMode {
    /// Fresh instruction every step (ideal protocol).
    Refresh,
    /// Exact average over all coin histories.
    Enumerate,
    /// Monte-Carlo average over sampled coin histories.
    Sample,
}

impl TrajMode {
    fn name(self) -> &'static str {
        match self {
            TrajMode::Refresh => "refresh",
            TrajMode::Enumerate => "enumerate",
            TrajMode::Sample => "sample",
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct TrajectoryArgs {
    /// Instruction state ρ_in (cardinal label: 0, 1, +, -, +i, -i).
    #[arg(long, default_value = "+")]
    pub rho: String,

    /// Data state σ_in (cardinal label).
    #[arg(long, default_value = "0")]
    pub sigma: String,

    /// Number of steps N; 0 echoes the inputs.
    #[arg(long)]
    pub steps: usize,

    /// Total rotation angle θ (e.g. `pi/2`, `0.3`).
    #[arg(long, value_parser = crate::angle::parse_angle)]
    pub theta: f64,

    #[arg(long, value_enum, default_value_t = TrajMode::Enumerate)]
    pub mode: TrajMode,

    /// Coin randomizations in sample mode.
    #[arg(long, default_value_t = 128)]
    pub randomizations: usize,

    #[command(flatten)]
    pub common: CommonOpts,
}

/// One reported protocol state. `joint` is absent when the mode never
/// materializes a two-qubit state (noiseless refresh).
struct TrajPoint {
    sigma: DensityMatrix,
    rho: DensityMatrix,
    joint: Option<DensityMatrix>,
}

pub fn run(args: &TrajectoryArgs) -> CliResult<(Value, CommandOutput)> {
    let rho_in = parse_state(&args.rho)?;
    let sigma_in = parse_state(&args.sigma)?;
    let noise = NoiseChoice::resolve(&args.common.noise)?;
    let shots = ShotMode::resolve(&args.common.shots)?;
    let n = args.steps;

    // Sampling every mask (or more) is just enumeration with extra work.
    let mode = if args.mode == TrajMode::Sample
        && n <= MASK_ENUM_LIMIT
        && (args.randomizations as u128) >= (1u128 << n)
    {
        TrajMode::Enumerate
    } else {
        args.mode
    };

    let mut points = compute_points(&rho_in, &sigma_in, args, mode, noise.params())?;
    if let ShotMode::Sampled(k) = shots {
        reconstruct_points(&mut points, k, args.common.seed, mode)?;
    }

    let config = json!({
        "rho": args.rho,
        "sigma": args.sigma,
        "steps": n,
        "theta": args.theta,
        "mode": args.mode.name(),
        "randomizations": args.randomizations,
        "noise": noise.echo(),
        "shots": shots.echo(),
    });

    let series = build_series(&points, &rho_in, &sigma_in, args.theta, n)?;
    let payload = series_payload(
        &series,
        json!({
            "depth": if n == 0 { 0 } else { 6 * n + 1 },
            "mode_used": mode.name(),
        }),
    );
    Ok((config, CommandOutput { payload, csv: CsvTable::Series(series) }))
}

fn compute_points(
    rho_in: &DensityMatrix,
    sigma_in: &DensityMatrix,
    args: &TrajectoryArgs,
    mode: TrajMode,
    np: Option<&NoiseParams>,
) -> CliResult<Vec<TrajPoint>> {
    let n = args.steps;
    let origin = TrajPoint {
        sigma: sigma_in.clone(),
        rho: rho_in.clone(),
        joint: Some(DensityMatrix::new(sigma_in.matrix().kron(rho_in.matrix()))?),
    };
    if n == 0 {
        return Ok(vec![origin]);
    }

    match (np, mode) {
        (None, TrajMode::Refresh) => {
            let cfg = DmeConfig::refresh(rho_in.clone(), sigma_in.clone(), n, args.theta);
            let sigmas = dme::dme_refresh(&cfg)?;
            Ok(sigmas
                .into_iter()
                .map(|s| TrajPoint { sigma: s, rho: rho_in.clone(), joint: None })
                .collect())
        }
        (None, TrajMode::Enumerate) => {
            let cfg = DmeConfig::enumerated(rho_in.clone(), sigma_in.clone(), n, args.theta);
            points_from_run(dme::dme2_enumerate(&cfg)?)
        }
        (None, TrajMode::Sample) => {
            let cfg = DmeConfig::sampled(
                rho_in.clone(),
                sigma_in.clone(),
                n,
                args.theta,
                args.randomizations,
                args.common.seed,
            );
            points_from_run(dme::dme2_sample(&cfg)?)
        }
        (Some(np), TrajMode::Refresh) => {
            // Compose noisy single-step blocks, discarding the instruction
            // marginal after each one.
            let delta = args.theta / n as f64;
            let mut points = vec![origin];
            let mut sigma = sigma_in.clone();
            for _ in 0..n {
                let cfg = DmeConfig::enumerated(rho_in.clone(), sigma, 1, delta);
                let joint = simulate_dme2_averaged(&cfg, np)?;
                sigma = joint.reduce(Keep::First)?;
                points.push(TrajPoint {
                    sigma: sigma.clone(),
                    rho: rho_in.clone(),
                    joint: Some(joint),
                });
            }
            Ok(points)
        }
        (Some(np), TrajMode::Enumerate) => {
            // Each prefix is its own merged circuit with the same per-step
            // angle; the coin average is exact, no mask enumeration.
            let prefixes: Vec<DensityMatrix> = (1..=n)
                .into_par_iter()
                .map(|k| {
                    let theta_k = args.theta * k as f64 / n as f64;
                    let cfg = DmeConfig::enumerated(rho_in.clone(), sigma_in.clone(), k, theta_k);
                    simulate_dme2_averaged(&cfg, np)
                })
                .collect::<Result<_, _>>()?;
            let mut points = vec![origin];
            for joint in prefixes {
                points.push(point_from_joint(joint)?);
            }
            Ok(points)
        }
        (Some(np), TrajMode::Sample) => {
            // Draw the masks once (same stream as the noiseless sampler),
            // then run every prefix of every mask through the noisy
            // simulator and average per prefix length.
            let cfg = DmeConfig::sampled(
                rho_in.clone(),
                sigma_in.clone(),
                n,
                args.theta,
                args.randomizations,
                args.common.seed,
            );
            let masks: Vec<QmeMask> =
                dme::dme2_sample(&cfg)?.per_mask_final.iter().map(|o| o.mask).collect();
            let input = DensityMatrix::new(sigma_in.matrix().kron(rho_in.matrix()))?;

            let prefixes: Vec<DensityMatrix> = (1..=n)
                .into_par_iter()
                .map(|k| -> qinstr::Result<DensityMatrix> {
                    let theta_k = args.theta * k as f64 / n as f64;
                    let cfg_k =
                        DmeConfig::enumerated(rho_in.clone(), sigma_in.clone(), k, theta_k);
                    let mut acc = CMatrix::zeros(4, 4);
                    for mask in &masks {
                        let prefix = QmeMask::new(mask.index() & ((1u64 << k) - 1), k)?;
                        let circuit = build_dme2_circuit(&cfg_k, &prefix)?;
                        let out = simulate_noisy(&circuit, &input, np)?;
                        acc = acc.add(out.matrix());
                    }
                    DensityMatrix::new(acc.scale_re(1.0 / masks.len() as f64))
                })
                .collect::<Result<_, _>>()?;
            let mut points = vec![origin];
            for joint in prefixes {
                points.push(point_from_joint(joint)?);
            }
            Ok(points)
        }
    }
}

fn points_from_run(run: dme::Dme2Run) -> CliResult<Vec<TrajPoint>> {
    Ok(run
        .joint
        .into_iter()
        .zip(run.data)
        .zip(run.instruction)
        .map(|((joint, sigma), rho)| TrajPoint { sigma, rho, joint: Some(joint) })
        .collect())
}

fn point_from_joint(joint: DensityMatrix) -> CliResult<TrajPoint> {
    Ok(TrajPoint {
        sigma: joint.reduce(Keep::First)?,
        rho: joint.reduce(Keep::Second)?,
        joint: Some(joint),
    })
}

/// Replace every point by its K-shot tomographic reconstruction. Joint
/// states go through two-qubit tomography and are then reduced; refresh
/// mode keeps its authorial instruction series.
fn reconstruct_points(
    points: &mut [TrajPoint],
    shots: u64,
    seed: u64,
    mode: TrajMode,
) -> CliResult<()> {
    let beta1 = beta_from_readout(&ReadoutModel::ideal(1));
    let beta2 = beta_from_readout(&ReadoutModel::ideal(2));
    for (i, point) in points.iter_mut().enumerate() {
        let point_seed = derive_seed(seed, i as u64);
        match &point.joint {
            Some(joint) => {
                let records = measure_all(joint, shots, &ReadoutModel::ideal(2), point_seed)?;
                let rec = state_tomography(&records, &beta2)?;
                point.sigma = rec.reduce(Keep::First)?;
                if mode != TrajMode::Refresh {
                    point.rho = rec.reduce(Keep::Second)?;
                }
                point.joint = Some(rec);
            }
            None => {
                let records =
                    measure_all(&point.sigma, shots, &ReadoutModel::ideal(1), point_seed)?;
                point.sigma = state_tomography(&records, &beta1)?;
            }
        }
    }
    Ok(())
}

fn build_series(
    points: &[TrajPoint],
    rho_in: &DensityMatrix,
    sigma_in: &DensityMatrix,
    theta: f64,
    n: usize,
) -> CliResult<Vec<AnalysisSeries>> {
    let x: Vec<f64> = (0..points.len()).map(|i| i as f64).collect();
    let mut sigma_xyz = (Vec::new(), Vec::new(), Vec::new());
    let mut rho_xyz = (Vec::new(), Vec::new(), Vec::new());
    let mut ideal_xyz = (Vec::new(), Vec::new(), Vec::new());
    let mut fs = Vec::new();
    let mut purity = Vec::new();

    for (i, point) in points.iter().enumerate() {
        let frac = if n == 0 { 0.0 } else { i as f64 / n as f64 };
        let ideal = sigma_in.evolve(&dme::instruction_unitary(rho_in, theta * frac)?)?;

        let b = bloch(&point.sigma)?;
        sigma_xyz.0.push(b.x);
        sigma_xyz.1.push(b.y);
        sigma_xyz.2.push(b.z);
        let b = bloch(&point.rho)?;
        rho_xyz.0.push(b.x);
        rho_xyz.1.push(b.y);
        rho_xyz.2.push(b.z);
        let b = bloch(&ideal)?;
        ideal_xyz.0.push(b.x);
        ideal_xyz.1.push(b.y);
        ideal_xyz.2.push(b.z);

        fs.push(state_fidelity(&point.sigma, &ideal)?);
        purity.push(point.sigma.purity());
    }

    let mk = |metric: &str, mean: Vec<f64>| AnalysisSeries::new(metric, x.clone(), mean);
    Ok(vec![
        mk("sigma_x", sigma_xyz.0)?,
        mk("sigma_y", sigma_xyz.1)?,
        mk("sigma_z", sigma_xyz.2)?,
        mk("rho_x", rho_xyz.0)?,
        mk("rho_y", rho_xyz.1)?,
        mk("rho_z", rho_xyz.2)?,
        mk("sigma_ideal_x", ideal_xyz.0)?,
        mk("sigma_ideal_y", ideal_xyz.1)?,
        mk("sigma_ideal_z", ideal_xyz.2)?,
        mk("fs_sigma_vs_ideal", fs)?,
        mk("purity_sigma", purity)?,
    ])
}
