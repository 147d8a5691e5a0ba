use std::path::Path;

use realign_core::adjust::{adjust_prompt, adjust_token, beta_heuristic, AdjustParams, ZeroNormPolicy};
use realign_core::embedding::{CheckpointSeries, EmbeddingMatrix, PromptEmbedding};
use realign_core::io::{self, Artifact};
use realign_core::metrics::{pairwise_set_matrix, CovarianceMode, Metric, MetricConfig};
use realign_core::norms::{norm_histogram_with, prompt_trajectory, token_trajectory, HistogramOptions};
use realign_core::prompts::{construct, load_templates, PromptSetSpec, SetKind, SurfaceForm};
use realign_core::report::{emit_report, DriftReport, ReportFormat};
use realign_core::sim::{gaussian_base, simulate_prompt, simulate_token, DriftSpec, DRIFT_LABEL, REFERENCE_LABEL};
use realign_core::Error;

use crate::error::{CliError, Context};
use crate::{
    AdjustArgs, CovarianceArg, DriftArgs, Level, MetricArg, MetricArgs, NormsArgs, PromptsArgs, SimulateArgs,
    SweepArgs, ValidateArgs, ZeroNorm,
};

type CliResult<T = ()> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read_artifact(path: &Path, flag: &str) -> CliResult<Artifact> {
    io::read(path).context(format!("{flag} {}", path.display()))
}

/// Loads an artifact that can be treated as a single set of row vectors.
fn read_set(path: &Path, flag: &str) -> CliResult<EmbeddingMatrix> {
    match read_artifact(path, flag)? {
        Artifact::Matrix(m) => Ok(m),
        Artifact::Prompt(p) => Ok(p.into_matrix()),
        Artifact::Series(_) => Err(CliError::Core {
            context: format!("{flag} {}", path.display()),
            source: Error::InvalidParameter("expected a matrix or prompt embedding, found a checkpoint series".into()),
        }),
    }
}

/// How to reassemble frames into the artifact they came from.
enum Layout {
    Matrix,
    Prompt(Option<String>),
    Series(Vec<u64>),
}

fn split(artifact: Artifact) -> (Vec<EmbeddingMatrix>, Layout) {
    match artifact {
        Artifact::Matrix(m) => (vec![m], Layout::Matrix),
        Artifact::Prompt(p) => {
            let text = p.prompt_text.clone();
            (vec![p.into_matrix()], Layout::Prompt(text))
        }
        Artifact::Series(s) => (s.frames().to_vec(), Layout::Series(s.steps().to_vec())),
    }
}

fn join(mut frames: Vec<EmbeddingMatrix>, layout: Layout) -> realign_core::Result<Artifact> {
    Ok(match layout {
        Layout::Matrix => Artifact::Matrix(frames.remove(0)),
        Layout::Prompt(text) => {
            let mut p = PromptEmbedding::new(frames.remove(0));
            p.prompt_text = text;
            Artifact::Prompt(p)
        }
        Layout::Series(steps) => Artifact::Series(CheckpointSeries::new(steps, frames)?),
    })
}

/// Pairs every input frame with a reference frame: either one shared frame or
/// one per checkpoint.
fn reference_frame(reference: &[EmbeddingMatrix], i: usize, n: usize) -> CliResult<&EmbeddingMatrix> {
    match reference.len() {
        1 => Ok(&reference[0]),
        k if k == n => Ok(&reference[i]),
        k => Err(CliError::Core {
            context: "--reference".into(),
            source: Error::InvalidParameter(format!("holds {k} frames but --input holds {n}")),
        }),
    }
}

fn adjust_params(alpha: f64, beta: f64, zero_norm: ZeroNorm) -> CliResult<AdjustParams> {
    let policy = match zero_norm {
        ZeroNorm::Error => ZeroNormPolicy::Error,
        ZeroNorm::Passthrough => ZeroNormPolicy::Passthrough,
    };
    AdjustParams::new(alpha, beta)
        .map(|p| p.with_zero_norm_policy(policy))
        .map_err(|e| usage(format!("--alpha/--beta: {e}")))
}

fn frobenius(m: &EmbeddingMatrix) -> f64 {
    m.as_flat().iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn adjust(args: &AdjustArgs) -> CliResult {
    let (mut frames, layout) = split(read_artifact(&args.input, "--input")?);
    let reference = match &args.reference {
        Some(path) => Some(split(read_artifact(path, "--reference")?).0),
        None => None,
    };
    let n = frames.len();
    let mut betas = Vec::with_capacity(n);

    match args.level {
        Level::Token => {
            let token = args
                .token
                .as_deref()
                .ok_or_else(|| usage("--token is required at token level"))?;
            let concept = args
                .concept
                .as_deref()
                .ok_or_else(|| usage("--concept is required at token level"))?;
            for (i, frame) in frames.iter_mut().enumerate() {
                let c_frame = match &reference {
                    Some(r) => reference_frame(r, i, n)?,
                    None => &*frame,
                };
                let c = c_frame
                    .vector_by_label(concept)
                    .context(format!("--concept {concept}"))?;
                let row = frame.index_of(token).ok_or_else(|| CliError::Core {
                    context: format!("--token {token}"),
                    source: Error::LabelNotFound {
                        label: token.to_string(),
                        step: None,
                    },
                })?;
                let v = frame.vector(row).context("--input")?;
                let beta = if args.beta_auto {
                    beta_heuristic(&v, &c).context(format!("--beta-auto (frame {i})"))?
                } else {
                    args.beta
                };
                let params = adjust_params(args.alpha, beta, args.zero_norm)?;
                let adjusted = adjust_token(&v, &c, &params).context(format!("frame {i}"))?;
                frame.set_row(row, &adjusted).context("--input")?;
                betas.push(beta);
            }
        }
        Level::Prompt => {
            let reference = reference.ok_or_else(|| usage("--reference is required at prompt level"))?;
            for (i, frame) in frames.iter_mut().enumerate() {
                let p_c = PromptEmbedding::new(reference_frame(&reference, i, n)?.clone());
                let p_star = PromptEmbedding::new(frame.clone());
                let beta = if args.beta_auto {
                    let (ns, nc) = (frobenius(p_star.positions()), frobenius(p_c.positions()));
                    if nc == 0.0 {
                        return Err(CliError::Core {
                            context: format!("--beta-auto (frame {i})"),
                            source: Error::ZeroNormVector,
                        });
                    }
                    (ns + nc) / (2.0 * nc)
                } else {
                    args.beta
                };
                let params = adjust_params(args.alpha, beta, args.zero_norm)?;
                *frame = adjust_prompt(&p_star, &p_c, &params)
                    .context(format!("frame {i}"))?
                    .into_matrix();
                betas.push(beta);
            }
        }
    }

    let artifact = join(frames, layout).context("--input")?;
    io::write(&artifact, &args.out).context(format!("--out {}", args.out.display()))?;
    let beta_note = if args.beta_auto {
        let lo = betas.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = betas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        format!("beta auto in [{lo:.6}, {hi:.6}]")
    } else {
        format!("beta {}", args.beta)
    };
    println!(
        "adjusted {n} frame(s) at {} level, alpha {}, {beta_note} -> {}",
        match args.level {
            Level::Token => "token",
            Level::Prompt => "prompt",
        },
        args.alpha,
        args.out.display()
    );
    Ok(())
}

fn metric_config(args: &MetricArgs) -> CliResult<MetricConfig> {
    let metric = match args.metric {
        MetricArg::L2 => Metric::L2,
        MetricArg::Hausdorff => Metric::Hausdorff,
        MetricArg::Mahalanobis => Metric::Mahalanobis,
        MetricArg::Kl => Metric::Kl,
    };
    let cfg = MetricConfig {
        temperature: args.temperature,
        covariance_mode: match args.covariance {
            CovarianceArg::Diagonal => CovarianceMode::Diagonal,
            CovarianceArg::Shrinkage => CovarianceMode::FullShrinkage,
        },
        shrinkage_lambda: args.shrinkage,
        squared_l2: !args.unsquared,
        ..MetricConfig::for_metric(metric)
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn set_names(extra: usize) -> Vec<String> {
    let mut names = vec!["a".to_string(), "b".to_string()];
    match extra {
        0 => {}
        1 => names.push("c".into()),
        k => names.extend((1..=k).map(|i| format!("c{i}"))),
    }
    names
}

pub fn drift(args: &DriftArgs) -> CliResult {
    let cfg = metric_config(&args.metric)?;
    let mut sets = vec![read_set(&args.set_a, "--set-a")?, read_set(&args.set_b, "--set-b")?];
    for path in &args.set_c {
        sets.push(read_set(path, "--set-c")?);
    }
    let names = set_names(args.set_c.len());
    let paired = matches!(cfg.metric, Metric::L2 | Metric::Kl);
    for (s, name) in sets.iter().zip(&names).skip(1) {
        if s.dim() != sets[0].dim() {
            return Err(CliError::Core {
                context: format!("set {name}"),
                source: Error::DimMismatch {
                    expected: sets[0].dim(),
                    found: s.dim(),
                },
            });
        }
        if paired && s.n_rows() != sets[0].n_rows() {
            return Err(CliError::Core {
                context: format!("set {name}"),
                source: Error::PairingMismatch {
                    left: sets[0].n_rows(),
                    right: s.n_rows(),
                },
            });
        }
    }

    let matrix = pairwise_set_matrix(&sets, &cfg).context("drift")?;
    let report = DriftReport::from_matrix(&matrix, &names, args.intra);
    emit_report(&report, ReportFormat::from_path(&args.out), &args.out)
        .context(format!("--out {}", args.out.display()))?;

    let mut failed = false;
    for cell in &report.cells {
        match cell.value {
            Some(v) => println!("{} {} -> {}: {v:.6}", report.metric, cell.set_a, cell.set_b),
            None => {
                failed = true;
                eprintln!("{} {} -> {}: {}", report.metric, cell.set_a, cell.set_b, cell.notes);
            }
        }
    }
    if failed {
        // Shapes were checked above, so remaining cell failures are numerical.
        return Err(CliError::Numerical(format!(
            "report written to {} with failed cells",
            args.out.display()
        )));
    }
    Ok(())
}

pub fn norms(args: &NormsArgs) -> CliResult {
    let format = ReportFormat::from_path(&args.out);
    let out_ctx = format!("--out {}", args.out.display());
    match read_artifact(&args.vocab, "--vocab")? {
        Artifact::Series(series) => {
            let trajectory = match &args.reference {
                Some(path) => match read_artifact(path, "--reference")? {
                    Artifact::Series(reference) => prompt_trajectory(&series, &reference).context("trajectory")?,
                    _ => {
                        return Err(CliError::Core {
                            context: format!("--reference {}", path.display()),
                            source: Error::InvalidParameter("expected a checkpoint series".into()),
                        })
                    }
                },
                None => {
                    let (v, c) = match args.highlight.as_slice() {
                        [] => (DRIFT_LABEL, REFERENCE_LABEL),
                        [v, c] => (v.as_str(), c.as_str()),
                        _ => {
                            return Err(usage(
                                "--highlight takes exactly two labels for a series: token,concept",
                            ))
                        }
                    };
                    token_trajectory(&series, v, c).context("--highlight")?
                }
            };
            emit_report(&trajectory, format, &args.out).context(out_ctx)?;
            if let (Some(first), Some(last)) = (trajectory.norm_ratio.first(), trajectory.norm_ratio.last()) {
                println!(
                    "{} checkpoints, norm ratio {first:.6} -> {last:.6}, cosine {:.6} -> {:.6}",
                    trajectory.len(),
                    trajectory.cosine[0],
                    trajectory.cosine[trajectory.len() - 1]
                );
            }
        }
        artifact => {
            if args.reference.is_some() {
                return Err(usage("--reference applies only to checkpoint series"));
            }
            let m = match artifact {
                Artifact::Matrix(m) => m,
                Artifact::Prompt(p) => p.into_matrix(),
                Artifact::Series(_) => unreachable!(),
            };
            let highlight: Vec<&str> = args.highlight.iter().map(String::as_str).collect();
            let opts = HistogramOptions {
                exclude_highlighted: args.exclude_highlighted,
                ..HistogramOptions::bins(args.bins)
            };
            let hist = norm_histogram_with(&m, &highlight, opts).context("--vocab")?;
            emit_report(&hist, format, &args.out).context(out_ctx)?;
            println!("{} rows in {} bins", hist.total(), hist.counts.len());
            for h in &hist.highlighted {
                println!("{}: norm {:.6}, percentile {:.3}", h.label, h.norm, h.percentile);
            }
        }
    }
    Ok(())
}

pub fn sweep(args: &SweepArgs) -> CliResult {
    let cfg = metric_config(&args.metric)?;
    let base = adjust_params(args.alphas[0], args.betas[0], args.zero_norm)?;
    for &a in &args.alphas {
        for &b in &args.betas {
            adjust_params(a, b, args.zero_norm)?;
        }
    }
    let input = read_set(&args.input, "--input")?;
    let reference = read_set(&args.reference, "--reference")?;
    let results =
        realign_core::sweep::sweep(&input, &reference, &args.alphas, &args.betas, &base, &cfg).context("sweep")?;
    emit_report(&results, ReportFormat::from_path(&args.out), &args.out)
        .context(format!("--out {}", args.out.display()))?;
    for p in &results.points {
        println!("alpha {} beta {} {} {:.6}", p.alpha, p.beta, p.metric, p.value);
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> CliResult {
    let base = gaussian_base(args.dim, args.seed).map_err(|e| usage(format!("--dim: {e}")))?;
    let mut spec = DriftSpec::new(base, args.steps, args.gamma, args.omega);
    if let Some(max) = args.max_angle {
        spec.max_angle = max;
    }
    spec.noise_sigma = args.noise;
    spec.plane_seed = args.seed.wrapping_add(1);
    spec.noise_seed = args.seed.wrapping_add(2);
    spec.validate().map_err(|e| match e {
        Error::InvalidParameter(_) => usage(e.to_string()),
        e => CliError::Core {
            context: "simulate".into(),
            source: e,
        },
    })?;

    let out_ctx = format!("--out {}", args.out.display());
    let notes = match args.prompt_len {
        None => {
            if !args.drift_positions.is_empty() {
                return Err(usage("--drift-positions needs --prompt-len"));
            }
            let sim = simulate_token(&spec).context("simulate")?;
            io::write(&Artifact::Series(sim.series), &args.out).context(out_ctx)?;
            println!(
                "wrote {} checkpoints ({}, {}) to {}",
                args.steps + 1,
                DRIFT_LABEL,
                REFERENCE_LABEL,
                args.out.display()
            );
            sim.notes
        }
        Some(len) => {
            let positions = if args.drift_positions.is_empty() {
                vec![0]
            } else {
                args.drift_positions.clone()
            };
            let sim = simulate_prompt(&spec, len, &positions).map_err(|e| match e {
                Error::IndexError { .. } | Error::InvalidParameter(_) => usage(format!("--drift-positions: {e}")),
                e => CliError::Core {
                    context: "simulate".into(),
                    source: e,
                },
            })?;
            io::write(&Artifact::Series(sim.drifting), args.out.join("drifting")).context(out_ctx.clone())?;
            io::write(&Artifact::Series(sim.reference), args.out.join("reference")).context(out_ctx)?;
            println!(
                "wrote drifting/ and reference/ ({} checkpoints, {len} positions) to {}",
                args.steps + 1,
                args.out.display()
            );
            sim.notes
        }
    };
    for n in notes {
        println!("note: {n}");
    }
    Ok(())
}

pub fn validate(args: &ValidateArgs) -> CliResult {
    let manifest = io::read_manifest(&args.dir).context(format!("--dir {}", args.dir.display()))?;
    read_artifact(&args.dir, "--dir")?;
    println!(
        "ok: {:?} shape {:?}{}",
        manifest.kind,
        manifest.shape,
        if manifest.labels.is_some() { ", labelled" } else { "" }
    );
    Ok(())
}

pub fn prompts(args: &PromptsArgs) -> CliResult {
    let templates = load_templates(&args.templates).context(format!("--templates {}", args.templates.display()))?;
    let spec = PromptSetSpec::new(
        templates,
        args.keyword.clone(),
        args.concept.clone(),
        SetKind::Contextual,
    )
    .map_err(|e| usage(e.to_string()))?;
    for (form, path, flag) in [
        (SurfaceForm::Keyword, &args.out_a, "--out-a"),
        (SurfaceForm::Concept, &args.out_b, "--out-b"),
    ] {
        let lines = construct(&spec, form).context(format!("--templates {}", args.templates.display()))?;
        let mut text = lines.join("\n");
        text.push('\n');
        io::write_atomic(path, text.as_bytes()).context(format!("{flag} {}", path.display()))?;
    }
    println!(
        "wrote {} paired prompts to {} and {}",
        spec.templates.len(),
        args.out_a.display(),
        args.out_b.display()
    );
    Ok(())
}
