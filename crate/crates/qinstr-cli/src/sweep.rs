//! `sweep-n`: state fidelity of the protocol as a function of step count.
//!
//! Discretization error falls off as 1/N while decoherence grows linearly
//! with the 6N+1 circuit depth, so the noisy fidelity curve rises, peaks,
//! and falls — the central trade-off of the protocol. Three fidelities
//! are reported per N: the noiseless algorithm against the ideal rotation
//! (discretization alone), the noisy run against the ideal rotation (the
//! measurable curve), and the noisy run against the exact noiseless
//! algorithm (decoherence alone). With `--randomizations r` the noisy
//! points come from r sampled coin histories and carry bootstrap error
//! bars; otherwise they use the exact coin average.

use clap::Args;
use qinstr::analysis::{bootstrap_state, AnalysisSeries, BootstrapConfig};
use qinstr::compile::build_dme2_circuit;
use qinstr::dme::{self, DmeConfig};
use qinstr::noise::{simulate_dme2_averaged, simulate_noisy, NoiseParams};
use qinstr::qstate::{state_fidelity, DensityMatrix};
use qinstr::linalg::Keep;
use qinstr::seeding::derive_seed;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::common::{parse_state, CliError, CliResult, CommonOpts, NoiseChoice};
use crate::record::{series_payload, CommandOutput, CsvTable};

#[derive(Args, Clone, Debug)]
pub struct SweepArgs {
    /// Instruction state ρ_in (cardinal label).
    #[arg(long, default_value = "+")]
    pub rho: String,

    /// Data state σ_in (cardinal label).
    #[arg(long, default_value = "0")]
    pub sigma: String,

    /// Total rotation angle θ.
    #[arg(long, value_parser = crate::angle::parse_angle)]
    pub theta: f64,

    /// Sweep N = 1..=n-max (ignored when --n-list is given).
    #[arg(long, default_value_t = 12)]
    pub n_max: usize,

    /// Explicit comma-separated list of N values.
    #[arg(long)]
    pub n_list: Option<String>,

    /// Coin randomizations per noisy point; 0 uses the exact coin average.
    #[arg(long, default_value_t = 0)]
    pub randomizations: usize,

    #[command(flatten)]
    pub common: CommonOpts,
}

pub fn run(args: &SweepArgs) -> CliResult<(Value, CommandOutput)> {
    let rho_in = parse_state(&args.rho)?;
    let sigma_in = parse_state(&args.sigma)?;
    let noise = NoiseChoice::resolve(&args.common.noise)?;
    let grid = resolve_grid(args)?;

    let sigma_ideal = sigma_in.evolve(&dme::instruction_unitary(&rho_in, args.theta)?)?;

    // Exact noiseless algorithm output per N, shared by every metric.
    let noiseless: Vec<DensityMatrix> = grid
        .par_iter()
        .map(|&n| {
            let cfg = DmeConfig::enumerated(rho_in.clone(), sigma_in.clone(), n, args.theta);
            simulate_dme2_averaged(&cfg, &NoiseParams::noiseless())
                .and_then(|joint| joint.reduce(Keep::First))
        })
        .collect::<Result<_, _>>()?;

    let fs_noiseless: Vec<f64> = noiseless
        .iter()
        .map(|s| state_fidelity(s, &sigma_ideal))
        .collect::<Result<_, _>>()?;

    let x: Vec<f64> = grid.iter().map(|&n| n as f64).collect();
    let depth: Vec<f64> = grid.iter().map(|&n| (6 * n + 1) as f64).collect();
    let mut series = vec![
        AnalysisSeries::new("fs_vs_ideal_noiseless", x.clone(), fs_noiseless)?,
        AnalysisSeries::new("depth", x.clone(), depth)?,
    ];

    if let Some(np) = noise.params() {
        if args.randomizations == 0 {
            let noisy: Vec<DensityMatrix> = grid
                .par_iter()
                .map(|&n| {
                    let cfg =
                        DmeConfig::enumerated(rho_in.clone(), sigma_in.clone(), n, args.theta);
                    simulate_dme2_averaged(&cfg, np).and_then(|joint| joint.reduce(Keep::First))
                })
                .collect::<Result<_, _>>()?;
            let fs_noisy: Vec<f64> = noisy
                .iter()
                .map(|s| state_fidelity(s, &sigma_ideal))
                .collect::<Result<_, _>>()?;
            let fs_dme2: Vec<f64> = noisy
                .iter()
                .zip(&noiseless)
                .map(|(s, r)| state_fidelity(s, r))
                .collect::<Result<_, _>>()?;
            series.push(AnalysisSeries::new("fs_vs_ideal", x.clone(), fs_noisy)?);
            series.push(AnalysisSeries::new("fs_vs_exact_dme2", x, fs_dme2)?);
        } else {
            let (noisy, dme2) =
                sampled_curves(args, &rho_in, &sigma_in, np, &grid, &sigma_ideal, &noiseless)?;
            series.push(noisy);
            series.push(dme2);
        }
    }

    let config = json!({
        "rho": args.rho,
        "sigma": args.sigma,
        "theta": args.theta,
        "n": &grid,
        "randomizations": args.randomizations,
        "noise": noise.echo(),
        "shots": "exact",
    });
    let payload = series_payload(&series, json!({ "n": grid }));
    Ok((config, CommandOutput { payload, csv: CsvTable::Series(series) }))
}

fn resolve_grid(args: &SweepArgs) -> CliResult<Vec<usize>> {
    let grid = match &args.n_list {
        Some(list) => list
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::Config(format!("bad N list `{list}`")))?,
        None => (1..=args.n_max).collect(),
    };
    if grid.is_empty() || grid.iter().any(|&n| n == 0) {
        return Err(CliError::Config("N grid must be non-empty with N ≥ 1".into()));
    }
    Ok(grid)
}

/// Sampled-mask noisy fidelity curves with bootstrap error bars. Point k
/// of the grid draws its masks and bootstrap streams from
/// derive_seed(seed, k), so single points can be reproduced in isolation.
fn sampled_curves(
    args: &SweepArgs,
    rho_in: &DensityMatrix,
    sigma_in: &DensityMatrix,
    np: &NoiseParams,
    grid: &[usize],
    sigma_ideal: &DensityMatrix,
    noiseless: &[DensityMatrix],
) -> CliResult<(AnalysisSeries, AnalysisSeries)> {
    let input = DensityMatrix::new(sigma_in.matrix().kron(rho_in.matrix()))?;
    let per_point: Vec<(f64, f64, f64, f64)> = grid
        .par_iter()
        .enumerate()
        .map(|(idx, &n)| -> qinstr::Result<_> {
            let point_seed = derive_seed(args.common.seed, idx as u64);
            let cfg = DmeConfig::sampled(
                rho_in.clone(),
                sigma_in.clone(),
                n,
                args.theta,
                args.randomizations,
                point_seed,
            );
            let masks = dme::dme2_sample(&cfg)?.per_mask_final;
            let finals: Vec<DensityMatrix> = masks
                .iter()
                .map(|o| {
                    let circuit = build_dme2_circuit(&cfg, &o.mask)?;
                    simulate_noisy(&circuit, &input, np)
                })
                .collect::<Result<_, _>>()?;

            let bs_cfg = BootstrapConfig {
                r_qme: finals.len(),
                ..BootstrapConfig::state_defaults(derive_seed(point_seed, 1))
            };
            let vs_ideal = bootstrap_state(&finals, &bs_cfg, sigma_ideal)?;
            let vs_dme2 = bootstrap_state(&finals, &bs_cfg, &noiseless[idx])?;
            Ok((vs_ideal.mean, vs_ideal.sigma, vs_dme2.mean, vs_dme2.sigma))
        })
        .collect::<Result<_, _>>()?;

    let x: Vec<f64> = grid.iter().map(|&n| n as f64).collect();
    let noisy = AnalysisSeries::new(
        "fs_vs_ideal",
        x.clone(),
        per_point.iter().map(|p| p.0).collect(),
    )?
    .with_sigma(per_point.iter().map(|p| p.1).collect())?
    .with_seed(args.common.seed);
    let dme2 = AnalysisSeries::new(
        "fs_vs_exact_dme2",
        x,
        per_point.iter().map(|p| p.2).collect(),
    )?
    .with_sigma(per_point.iter().map(|p| p.3).collect())?
    .with_seed(args.common.seed);
    Ok((noisy, dme2))
}
