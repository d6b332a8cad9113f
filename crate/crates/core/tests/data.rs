use omnivat::data::{
    decode_embeddings, encode_embeddings, mean_class_displacement, synth_suite, tactile_kept, Domain, Modality,
    SynthConfig,
};

/// Ridge least squares on one-hot targets, solved through the normal
/// equations by Gaussian elimination with partial pivoting.
struct LinearProbe {
    weights: Vec<Vec<f64>>,
}

fn features(d: &Domain) -> Vec<Vec<f64>> {
    d.pairs
        .iter()
        .map(|p| {
            let mut x = p.vis.clone();
            x.extend(&p.tac);
            x.push(1.0);
            x
        })
        .collect()
}

impl LinearProbe {
    fn fit(x: &[Vec<f64>], y: &[usize], classes: usize) -> Self {
        let f = x[0].len();
        let mut a = vec![vec![0.0; f + classes]; f];
        for (row, &label) in x.iter().zip(y) {
            for i in 0..f {
                for j in 0..f {
                    a[i][j] += row[i] * row[j];
                }
                a[i][f + label] += row[i];
            }
        }
        for (i, r) in a.iter_mut().enumerate() {
            r[i] += 1e-6;
        }
        for col in 0..f {
            let pivot = (col..f).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs())).unwrap();
            a.swap(col, pivot);
            for r in 0..f {
                if r != col {
                    let k = a[r][col] / a[col][col];
                    for c in col..f + classes {
                        a[r][c] -= k * a[col][c];
                    }
                }
            }
        }
        let weights = (0..classes).map(|c| (0..f).map(|i| a[i][f + c] / a[i][i]).collect()).collect();
        Self { weights }
    }

    fn accuracy(&self, x: &[Vec<f64>], y: &[usize]) -> f64 {
        let hits = x
            .iter()
            .zip(y)
            .filter(|(row, &label)| {
                let scores: Vec<f64> =
                    self.weights.iter().map(|w| w.iter().zip(row.iter()).map(|(a, b)| a * b).sum()).collect();
                let best = (0..scores.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
                best == label
            })
            .count();
        hits as f64 / y.len() as f64
    }
}

#[test]
fn linear_probe_separates_source_and_feels_the_shift() {
    let suite = synth_suite(&SynthConfig::default()).unwrap();
    let probe = LinearProbe::fit(&features(&suite.source), &suite.source.labels(), suite.classes);
    let heldout = probe.accuracy(&features(&suite.source_heldout), &suite.source_heldout.labels());
    assert!(heldout >= 0.9, "held-out probe accuracy {heldout}");
    for t in &suite.targets {
        let acc = probe.accuracy(&features(t), &t.labels());
        assert!(acc <= heldout, "target {acc} above held-out {heldout}");
    }
}

#[test]
fn tactile_keeps_the_first_half() {
    assert_eq!(tactile_kept(32), 16);
    assert_eq!(tactile_kept(9), 5);
    let suite = synth_suite(&SynthConfig { shift: 0.0, noise_var: 0.0, ..SynthConfig::default() }).unwrap();
    for p in &suite.source.pairs {
        assert!(p.tac[16..].iter().all(|&x| x == 0.0));
        assert_eq!(p.tac[..16], p.vis[..16]);
    }
}

#[test]
fn targets_carry_no_language_and_share_categories() {
    let suite = synth_suite(&SynthConfig { seed: 3, ..SynthConfig::default() }).unwrap();
    assert!(suite.source.language.iter().all(|l| l.len() == 80));
    for t in &suite.targets {
        assert!(!t.has_language());
        assert!(t.to_records().iter().all(|r| r.modality != Modality::Lang));
        let mut cats: Vec<usize> = t.labels();
        cats.sort_unstable();
        cats.dedup();
        assert_eq!(cats, (0..5).collect::<Vec<_>>());
    }
}

#[test]
fn displacement_is_monotone_in_shift_over_seeds() {
    let mean = |shift: f64| {
        (0..5u64)
            .map(|seed| {
                let s = synth_suite(&SynthConfig { shift, seed, ..SynthConfig::default() }).unwrap();
                s.targets.iter().map(|t| mean_class_displacement(&s.source, t, s.classes)).sum::<f64>()
                    / s.targets.len() as f64
            })
            .sum::<f64>()
            / 5.0
    };
    let (a, b, c) = (mean(0.1), mean(0.2), mean(0.4));
    assert!(a < b && b < c, "{a} {b} {c}");
}

#[test]
fn empty_and_truncated_files_are_errors() {
    assert!(decode_embeddings(&[]).is_err());
    let suite = synth_suite(&SynthConfig { dim: 8, classes: 2, per_class: 1, ..SynthConfig::default() }).unwrap();
    let bytes = encode_embeddings(8, &suite.targets[0].to_records()).unwrap();
    for cut in [3, 10, 20, bytes.len() - 1] {
        assert!(decode_embeddings(&bytes[..cut]).is_err(), "cut at {cut}");
    }
    let (dim, records) = decode_embeddings(&bytes).unwrap();
    assert_eq!(dim, 8);
    let mut expected = suite.targets[0].to_records();
    for r in &mut expected {
        r.vector.iter_mut().for_each(|x| *x = *x as f32 as f64);
    }
    assert_eq!(records, expected);
}
