//! Report CSVs. These files are the primary numeric record; plots are
//! derived from them alone.

use super::{AblationResult, BeliefProfile, EntropyProfile, InterventionRecord, UniformRow};
use crate::taskgen::EntityCategory;
use std::io::Write;
use std::path::Path;

fn writer(path: &Path) -> std::io::Result<std::io::BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// `layer, checkpoint, strategy, mean, std, n`; pooled rows write
/// `all` in the checkpoint column.
pub fn write_entropy_profile_csv(profiles: &[&EntropyProfile], path: &Path) -> std::io::Result<()> {
    let mut out = writer(path)?;
    writeln!(out, "layer,checkpoint,strategy,mean,std,n")?;
    for profile in profiles {
        for row in &profile.rows {
            let checkpoint = row
                .checkpoint
                .map(|c| c.to_string())
                .unwrap_or_else(|| "all".into());
            writeln!(
                out,
                "{},{},{},{:.6},{:.6},{}",
                row.layer, checkpoint, profile.strategy, row.mean, row.std, row.n
            )?;
        }
    }
    out.flush()
}

/// `step, layer, kl, cosine, entropy_diff, overlap10, mixing_entropy`.
pub fn write_intervention_csv(records: &[InterventionRecord], path: &Path) -> std::io::Result<()> {
    let mut out = writer(path)?;
    writeln!(
        out,
        "step,layer,kl,cosine,entropy_diff,overlap10,mixing_entropy"
    )?;
    for rec in records {
        for lm in &rec.layers {
            writeln!(
                out,
                "{},{},{:.6e},{:.6},{:.6},{:.2},{:.6}",
                rec.step,
                lm.layer,
                lm.kl,
                lm.cosine,
                lm.entropy_diff,
                lm.top10_overlap,
                rec.mixing_entropy
            )?;
        }
    }
    out.flush()
}

/// `depth, step, category, mass, n`; the partition categories plus a
/// separate `target_entity` curve (the partition folds the target into
/// correct-next at the final step).
pub fn write_belief_csv(profiles: &[BeliefProfile], path: &Path) -> std::io::Result<()> {
    let mut out = writer(path)?;
    writeln!(out, "depth,step,category,mass,n")?;
    for profile in profiles {
        for step in &profile.steps {
            for (i, cat) in EntityCategory::ALL.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{:.6},{}",
                    profile.depth,
                    step.step,
                    cat.label(),
                    step.masses[i],
                    step.n
                )?;
            }
            writeln!(
                out,
                "{},{},target_entity,{:.6},{}",
                profile.depth, step.step, step.target_entity, step.n
            )?;
        }
    }
    out.flush()
}

/// `condition, correct, total, accuracy`.
pub fn write_ablation_csv(results: &[AblationResult], path: &Path) -> std::io::Result<()> {
    let mut out = writer(path)?;
    writeln!(out, "condition,correct,total,accuracy")?;
    for r in results {
        writeln!(
            out,
            "{},{},{},{:.6}",
            r.condition.label(),
            r.outcome.correct,
            r.outcome.total,
            r.accuracy()
        )?;
    }
    out.flush()
}

/// `weights, k, layer, mean, std, n` for the uniform-superposition runs.
pub fn write_uniform_csv(rows: &[UniformRow], path: &Path) -> std::io::Result<()> {
    let mut out = writer(path)?;
    writeln!(out, "weights,k,layer,mean,std,n")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{}",
            r.weights, r.k, r.layer, r.mean, r.std, r.n
        )?;
    }
    out.flush()
}

/// Parses a CSV written by this module back into header + string rows.
pub fn read_csv(path: &Path) -> std::io::Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .map(|h| h.split(',').map(|s| s.to_string()).collect())
        .unwrap_or_default();
    let rows = lines
        .map(|l| l.split(',').map(|s| s.to_string()).collect())
        .collect();
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::EvalOutcome;
    use crate::probes::{AblationCondition, BeliefMode, BeliefStep, EntropyRow};

    #[test]
    fn csv_schemas_round_trip() {
        let dir = std::env::temp_dir().join("latentlab_report_test");
        let _ = std::fs::remove_dir_all(&dir);

        let profile = EntropyProfile {
            strategy: "soft",
            rows: vec![
                EntropyRow {
                    layer: 0,
                    checkpoint: Some(0),
                    mean: 1.5,
                    std: 0.1,
                    n: 3,
                },
                EntropyRow {
                    layer: 0,
                    checkpoint: None,
                    mean: 1.4,
                    std: 0.2,
                    n: 9,
                },
            ],
        };
        let p = dir.join("entropy_profile.csv");
        write_entropy_profile_csv(&[&profile], &p).unwrap();
        let (header, rows) = read_csv(&p).unwrap();
        assert_eq!(
            header,
            vec!["layer", "checkpoint", "strategy", "mean", "std", "n"]
        );
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1][1], "all");

        let belief = BeliefProfile {
            depth: 4,
            mode: BeliefMode::CoconutLatents,
            steps: vec![BeliefStep {
                step: 1,
                masses: [0.5, 0.2, 0.2, 0.1],
                target_entity: 0.2,
                n: 7,
            }],
        };
        let p = dir.join("belief.csv");
        write_belief_csv(&[belief], &p).unwrap();
        let (header, rows) = read_csv(&p).unwrap();
        assert_eq!(header, vec!["depth", "step", "category", "mass", "n"]);
        assert_eq!(rows.len(), 5); // four categories + target_entity

        let ablation = vec![AblationResult {
            condition: AblationCondition::WithLatent(6),
            outcome: EvalOutcome {
                correct: 99,
                total: 100,
            },
        }];
        let p = dir.join("ablation.csv");
        write_ablation_csv(&ablation, &p).unwrap();
        let (_, rows) = read_csv(&p).unwrap();
        assert_eq!(rows[0][0], "with_latent(6)");
        assert_eq!(rows[0][3], "0.990000");

        std::fs::remove_dir_all(&dir).unwrap();
    }
}
