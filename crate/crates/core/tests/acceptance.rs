//! One line per acceptance criterion, each checked against an oracle that
//! lives here rather than in the library.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sepacvae::corpus::{
    generate_synthetic_corpus, DialoguePair, EmbeddingMatrix, SyntheticConfig, Vocab, EOS,
};
use sepacvae::metrics::{
    bleu_n, coherence, distinct_n, embedding_average, geometry_analysis, unigram_perplexity, Grouping,
};
use sepacvae::model::{kl_diag_gauss, GaussianParams, Model, ModelConfig};
use sepacvae::par::Execution;
use sepacvae::runner::{
    analyze_latent, baseline_step, build_model, evaluate_model, train, Dataset, EvalContext, RunConfig, Split,
    Variant,
};
use sepacvae::separation::{dialogue_augment, gradient_block, total_loss, GroupSet, SepaOptions};
use sepacvae::theory::{kl_1d, numeric_minimizer, random_instance, verify_minimizers, Gauss1D};

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

// Closed-form minimizer of KL(q1||p) + KL(q2||p), written out independently.
fn minimizer_oracle(q1: Gauss1D, q2: Gauss1D) -> (f64, f64) {
    let mu = (q1.mu + q2.mu) / 2.0;
    let var = (q1.sigma.powi(2) + q2.sigma.powi(2)) / 2.0 + (q1.mu - q2.mu).powi(2) / 4.0;
    (mu, var.sqrt())
}

fn theory_reproduction() -> Verdict {
    let start = Instant::now();
    let rows = match verify_minimizers(100, 7, Execution::Parallel) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("verification failed: {e}")),
    };
    let elapsed = start.elapsed();
    let mut worst = 0.0f64;
    for (i, r) in rows.iter().enumerate() {
        let [q1, q2] = random_instance(7, i);
        let in_range = [q1, q2]
            .iter()
            .all(|q| (-5.0..=5.0).contains(&q.mu) && (0.1..=3.0).contains(&q.sigma));
        if !in_range || r.posteriors != [q1, q2] {
            return verdict(false, format!("instance {i} outside the sampling box"));
        }
        let (mu, sigma) = minimizer_oracle(q1, q2);
        worst = worst.max((r.numeric.mu - mu).abs()).max((r.numeric.sigma - sigma).abs());
    }
    let direct = numeric_minimizer(rows[0].posteriors[0], rows[0].posteriors[1]).map(|g| g == rows[0].numeric);
    let pass = rows.len() == 100 && worst < 1e-3 && elapsed < Duration::from_secs(60) && matches!(direct, Ok(true));
    verdict(
        pass,
        format!("100 instances, max componentwise gap {worst:.2e} (< 1e-3), {elapsed:.2?} (< 60 s)"),
    )
}

fn gauss_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    (-(x - mu).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

// Composite Simpson rule of q(x) log(q(x)/p(x)) over mu_q ± 12 sigma_q.
fn kl_quadrature(q: Gauss1D, p: Gauss1D) -> f64 {
    let n = 200_000;
    let (a, b) = (q.mu - 12.0 * q.sigma, q.mu + 12.0 * q.sigma);
    let h = (b - a) / n as f64;
    let f = |x: f64| {
        let lq = -(x - q.mu).powi(2) / (2.0 * q.sigma * q.sigma) - q.sigma.ln();
        let lp = -(x - p.mu).powi(2) / (2.0 * p.sigma * p.sigma) - p.sigma.ln();
        gauss_pdf(x, q.mu, q.sigma) * (lq - lp)
    };
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn kl_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_quad = 0.0f64;
    for _ in 0..50 {
        let mut g = || Gauss1D {
            mu: rng.random_range(-3.0..=3.0),
            sigma: rng.random_range(0.3..=2.5),
        };
        let (q, p) = (g(), g());
        worst_quad = worst_quad.max((kl_1d(q, p) - kl_quadrature(q, p)).abs());
    }

    let mut worst_mc = 0.0f64;
    for inst in 0..20 {
        let dim = 2;
        let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..dim).map(|_| rng.random_range(lo..=hi)).collect() };
        let (mq, sq, mp, sp) = (draw(-1.0, 1.0), draw(0.7, 1.4), draw(-1.0, 1.0), draw(0.7, 1.4));
        let log_var = |s: &[f64]| s.iter().map(|x| 2.0 * x.ln()).collect::<Vec<_>>();
        let q = GaussianParams::new(mq.clone(), log_var(&sq)).unwrap();
        let p = GaussianParams::new(mp.clone(), log_var(&sp)).unwrap();
        let log_ratio = |z: &[f64]| -> f64 {
            (0..dim)
                .map(|i| gauss_pdf(z[i], mq[i], sq[i]).ln() - gauss_pdf(z[i], mp[i], sp[i]).ln())
                .sum()
        };
        let mut mc_rng = ChaCha8Rng::seed_from_u64(77 + inst);
        let pairs = 500_000;
        let mut acc = 0.0;
        for _ in 0..pairs {
            let eps: Vec<f64> = (0..dim).map(|_| mc_rng.sample(StandardNormal)).collect();
            let plus: Vec<f64> = (0..dim).map(|i| mq[i] + sq[i] * eps[i]).collect();
            let minus: Vec<f64> = (0..dim).map(|i| mq[i] - sq[i] * eps[i]).collect();
            acc += log_ratio(&plus) + log_ratio(&minus);
        }
        let mc = acc / (2 * pairs) as f64;
        worst_mc = worst_mc.max((kl_diag_gauss(&q, &p) - mc).abs());
    }
    verdict(
        worst_quad < 1e-6 && worst_mc < 0.01,
        format!("quadrature gap {worst_quad:.2e} (< 1e-6, 50 instances), Monte-Carlo gap {worst_mc:.2e} (< 0.01, 20 instances, 1e6 draws)"),
    )
}

fn gradient_fidelity() -> Verdict {
    let model = Model::new(ModelConfig {
        vocab_size: 10,
        embed_dim: 8,
        hidden: 4,
        latent: 2,
        layers: 1,
        groups: 2,
        bow: false,
        seed: 11,
        zero_latent: false,
    })
    .unwrap();
    let batch: Vec<DialoguePair> = [([4, 5, EOS], [6, 7, EOS]), ([8, 4, EOS], [9, 6, EOS]), ([5, 5, EOS], [7, 9, EOS])]
        .iter()
        .enumerate()
        .map(|(i, (c, r))| DialoguePair {
            context: c.to_vec(),
            response: r.to_vec(),
            pair_id: i,
        })
        .collect();
    let groups = dialogue_augment(8, 2).unwrap();
    let opts = SepaOptions {
        averaged_positives: false,
        seed: 5,
        exec: Execution::Sequential,
    };
    let alpha = 0.7;
    let base = total_loss(&model, &batch, &groups, alpha, 3, opts).unwrap();
    let eps = 1e-4;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for id in model.params().ids().collect::<Vec<_>>() {
        let analytic = base.grads.get(id).to_vec();
        for (j, &a) in analytic.iter().enumerate() {
            let eval = |delta: f64| {
                let mut m = model.clone();
                m.params_mut().get_mut(id).data_mut()[j] += delta;
                total_loss(&m, &batch, &groups, alpha, 3, opts).unwrap().loss
            };
            let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
            checked += 1;
        }
    }
    verdict(
        worst < 1e-3 && base.row.loss_re != 0.0,
        format!("{checked} parameter entries, max relative error {worst:.2e} (< 1e-3)"),
    )
}

fn brute_augment(m: usize, n: usize) -> Vec<Vec<f64>> {
    let width = m / n;
    (0..n)
        .map(|g| (0..m).map(|j| if j < n * width && j / width == g { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn brute_block(losses: &[Vec<f64>]) -> (Vec<usize>, Vec<Vec<u8>>, f64) {
    let mut sel = Vec::new();
    let mut mask = Vec::new();
    let mut total = 0.0;
    for row in losses {
        let mut best = 0;
        for k in 1..row.len() {
            if row[k] < row[best] {
                best = k;
            }
        }
        sel.push(best);
        mask.push((0..row.len()).map(|k| u8::from(k == best)).collect());
        total += row[best];
    }
    (sel, mask, total)
}

fn algorithm_trace() -> Verdict {
    let mut augment_cases = 0;
    for m in 1..=64 {
        for n in 1..=m {
            let gs = dialogue_augment(m, n).unwrap();
            let expect = brute_augment(m, n);
            if gs.vectors() != expect.as_slice() {
                return verdict(false, format!("dialogue_augment({m}, {n}) differs from brute force"));
            }
            for a in 0..n {
                for b in 0..n {
                    let dot: f64 = expect[a].iter().zip(&expect[b]).map(|(x, y)| x * y).sum();
                    if (a != b && dot != 0.0) || (a == b && dot == 0.0) {
                        return verdict(false, format!("groups {a},{b} of ({m}, {n}) not orthogonal"));
                    }
                }
            }
            augment_cases += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut block_cases = 0;
    for batch in 1..=8 {
        for n in 1..=8 {
            for _ in 0..200 {
                let losses: Vec<Vec<f64>> = (0..batch)
                    .map(|_| (0..n).map(|_| rng.random_range(0..3) as f64 * 0.5).collect())
                    .collect();
                let got = gradient_block(&losses).unwrap();
                let (sel, mask, total) = brute_block(&losses);
                if got.selected != sel || got.mask.rows() != mask.as_slice() || got.masked_loss != total {
                    return verdict(false, format!("gradient_block differs on {losses:?}"));
                }
                block_cases += 1;
            }
        }
    }
    verdict(
        true,
        format!("{augment_cases} augmentation shapes (1 <= N <= m <= 64), {block_cases} tie-heavy blocking matrices (batch, N <= 8)"),
    )
}

fn degeneration() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate_synthetic_corpus(&SyntheticConfig {
        n_contexts: 60,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let cfg = RunConfig {
        variant: Variant::Cvae,
        output: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    let data = Dataset::from_pairs(&corpus.pairs, &cfg).unwrap();
    let model = build_model(&cfg, &data).unwrap();
    let zero = GroupSet::zeroed(cfg.embed_dim, cfg.groups);
    let opts = SepaOptions {
        averaged_positives: false,
        seed: cfg.seed,
        exec: Execution::Parallel,
    };
    let mut steps = 0;
    for (step, batch) in data.train.chunks(cfg.batch_size).enumerate().take(8) {
        let step = step as u64;
        let sepa = total_loss(&model, batch, &zero, 1.0, step, opts).unwrap();
        let plain = baseline_step(&model, Variant::Cvae, batch, &vec![None; batch.len()], step, cfg.seed, Execution::Parallel)
            .unwrap();
        let same = sepa.row.loss_rec.to_bits() == plain.row.loss_rec.to_bits()
            && sepa.row.loss_kl.to_bits() == plain.row.loss_kl.to_bits()
            && sepa.selected.iter().all(|&s| s == 0)
            && sepa.group_losses.iter().all(|r| r.iter().all(|x| x.to_bits() == r[0].to_bits()));
        if !same {
            return verdict(false, format!("step {step}: {:?} vs {:?}", sepa.row, plain.row));
        }
        steps += 1;
    }
    verdict(true, format!("{steps} steps, reconstruction and KL bitwise equal, y+ = 0 everywhere"))
}

struct BehaviorRun {
    valid_ppl: f64,
    coherence: f64,
    inner: Option<f64>,
    unigram: f64,
}

fn behavior_run(variant: Variant, dir: &Path) -> BehaviorRun {
    let cfg = RunConfig {
        variant,
        epochs: 10,
        corpus: Some(dir.join("corpus/pairs.tsv")),
        embeddings: Some(dir.join("corpus/embeddings.txt")),
        output: dir.join(variant.name()),
        ..RunConfig::default()
    };
    let data = Dataset::load(&cfg).unwrap();
    let out = train(&cfg, &data).unwrap();
    let ctx = EvalContext {
        cfg: &cfg,
        model: &out.model,
        clusters: out.clusters.as_ref(),
    };
    let eval = evaluate_model(ctx, &data, Split::Valid).unwrap();
    let latent = analyze_latent(ctx, &data, Split::Valid, 0, 1.0).unwrap();
    let train_responses: Vec<&[usize]> = data.train.iter().map(|p| p.response.as_slice()).collect();
    let valid_responses: Vec<&[usize]> = data.valid.iter().map(|p| p.response.as_slice()).collect();
    BehaviorRun {
        valid_ppl: eval.report.ppl,
        coherence: eval.report.coherence,
        inner: latent.geometry.mean_inner,
        unigram: unigram_perplexity(&train_responses, &valid_responses, data.vocab.len()),
    }
}

fn behavioral() -> Verdict {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate_synthetic_corpus(&SyntheticConfig::default()).unwrap();
    corpus.write(&dir.path().join("corpus")).unwrap();
    let sepa = behavior_run(Variant::Sepacvae, dir.path());
    let cvae = behavior_run(Variant::Cvae, dir.path());
    let bow = behavior_run(Variant::CvaeBow, dir.path());
    let elapsed = start.elapsed();
    let a = matches!((sepa.inner, cvae.inner), (Some(s), Some(c)) if s > c);
    let b = sepa.coherence >= bow.coherence;
    let c = sepa.valid_ppl < sepa.unigram && bow.valid_ppl < bow.unigram;
    let fast = elapsed < Duration::from_secs(15 * 60);
    verdict(
        a && b && c && fast,
        format!(
            "(a) inner cosine sepacvae {:.4} vs thresholded cvae {:.4}: {}; (b) coherence sepacvae {:.4} vs cvae_bow {:.4}: {}; (c) ppl sepacvae {:.3}, cvae_bow {:.3} vs unigram {:.3}: {}; {} pairs, {elapsed:.0?}",
            sepa.inner.unwrap_or(f64::NAN),
            cvae.inner.unwrap_or(f64::NAN),
            if a { "ok" } else { "not met" },
            sepa.coherence,
            bow.coherence,
            if b { "ok" } else { "not met" },
            sepa.valid_ppl,
            bow.valid_ppl,
            sepa.unigram,
            if c { "ok" } else { "not met" },
            corpus.pairs.len(),
        ),
    )
}

fn metric_oracles() -> Verdict {
    let text = fs::read_to_string(data_dir().join("golden_corpus.txt")).unwrap();
    let sentences: Vec<Vec<&str>> = text.lines().map(|l| l.split_whitespace().collect()).collect();
    let mut failures = Vec::new();
    let mut check = |name: &str, got: f64, want: f64, exact: bool| {
        let ok = if exact { got == want } else { (got - want).abs() <= 1e-9 };
        if !ok {
            failures.push(format!("{name}: {got} vs {want}"));
        }
    };
    if sentences.len() != 10 {
        return verdict(false, "golden corpus must have 10 sentences");
    }
    // 29 tokens over 5 types; 19 bigrams over 10 types
    check("distinct-1", distinct_n(&sentences, 1), 5.0 / 29.0, true);
    check("distinct-2", distinct_n(&sentences, 2), 10.0 / 19.0, true);
    check("distinct-3", distinct_n(&sentences[..2], 3), 3.0 / 4.0, true);

    let e = (-1.0f64).exp();
    let bleu_cases: [(usize, usize, [f64; 3]); 6] = [
        (0, 1, [3.0 / 4.0, 0.5f64.sqrt(), 0.25f64.cbrt()]),
        (2, 3, [2.0 / 3.0, (1.0f64 / 3.0).sqrt(), (1.0f64 / 6.0).cbrt()]),
        (4, 5, [1.0, (1.0f64 / 3.0).sqrt(), (1.0f64 / 6.0).cbrt()]),
        (6, 7, [0.5, (1.0f64 / 6.0).sqrt(), (1.0f64 / 18.0).cbrt()]),
        (7, 6, [e, e, e]),
        (9, 8, [0.0, 0.0, 0.0]),
    ];
    for (c, r, want) in bleu_cases {
        for n in 1..=3 {
            check(&format!("bleu-{n}({c},{r})"), bleu_n(&sentences[c], &sentences[r], n), want[n - 1], false);
        }
    }

    let tokens: Vec<String> = ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
    let vocab = Vocab::from_words(tokens.clone());
    let table = sepacvae::corpus::parse_embedding_text(
        &fs::read_to_string(data_dir().join("golden_embeddings.txt")).unwrap(),
        Some(3),
        "golden",
    )
    .unwrap();
    let mut rows = vec![0.0; vocab.len() * 3];
    for t in &tokens {
        let id = vocab.id(t);
        rows[id * 3..id * 3 + 3].copy_from_slice(&table[t]);
    }
    let emb = EmbeddingMatrix::from_rows(3, rows).unwrap();
    let ids: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().map(|t| vocab.id(t)).collect())
        .collect();
    let avg_cases = [
        (0, 1, 8.0 / 9.0),
        (2, 3, 3.0 / 10.0f64.sqrt()),
        (4, 5, 1.0),
        (6, 7, 1.0),
        (9, 8, 0.5),
    ];
    for (c, r, want) in avg_cases {
        check(&format!("average({c},{r})"), embedding_average(&ids[c], &ids[r], &emb).unwrap(), want, false);
    }
    let coh_cases = [(0, 9, 2.0 * 2.0f64.sqrt() / 3.0), (3, 6, 0.5f64.sqrt()), (6, 3, 0.5f64.sqrt())];
    for (c, r, want) in coh_cases {
        check(&format!("coherence({c},{r})"), coherence(&ids[c], &ids[r], &emb).unwrap(), want, false);
    }
    let unk_only = vec![vocab.id("zzz")];
    let skipped = coherence(&unk_only, &ids[0], &emb).is_none() && embedding_average(&ids[0], &unk_only, &emb).is_none();

    let v = vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![-1.0, 0.0]];
    let g = geometry_analysis(&v, Grouping::Labels(&[0, 0, 1, 1]), 0);
    check("inner(labels)", g.inner_dis.unwrap(), 2.0f64.sqrt() / 4.0, false);
    check("inter(labels)", g.inter_dis.unwrap(), -0.25, false);
    let t = geometry_analysis(&v, Grouping::Threshold(0.7), 0);
    check("inner(threshold)", t.inner_dis.unwrap(), 0.5f64.sqrt(), false);
    check("inter(threshold)", t.inter_dis.unwrap(), -5.0 / 24.0 - 2.0f64.sqrt() / 6.0, false);

    let pass = failures.is_empty() && skipped;
    verdict(
        pass,
        if pass {
            "distinct-n exact, BLEU-1..3, embedding average, coherence and geometry within 1e-9 on the golden corpus".to_string()
        } else {
            format!("mismatches: {failures:?}, skip rule {skipped}")
        },
    )
}

fn tiny_run_config(dir: &Path, corpus: &Path) -> RunConfig {
    RunConfig {
        variant: Variant::Sepacvae,
        groups: 2,
        embed_dim: 4,
        hidden: 2,
        latent: 1,
        max_len: 3,
        batch_size: 2,
        epochs: 1_000_000,
        max_batches: 20_001,
        vocab_size: 16,
        valid_fraction: 0.25,
        test_fraction: 0.0,
        corpus: Some(corpus.to_path_buf()),
        output: dir.to_path_buf(),
        ..RunConfig::default()
    }
}

fn annealing() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("pairs.tsv");
    fs::write(&corpus, "a b\tc d\na c\tb d\nb a\td c\nc a\ta d\n").unwrap();
    let cfg = tiny_run_config(&dir.path().join("run"), &corpus);
    if cfg.warmup_batches != 10_000 {
        return verdict(false, "default warm-up is not 10000 batches");
    }
    let data = Dataset::load(&cfg).unwrap();
    if let Err(e) = train(&cfg, &data) {
        return verdict(false, format!("training failed: {e}"));
    }
    let csv = fs::read_to_string(cfg.output.join("train_report.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let (bi, ai) = (
        header.iter().position(|h| *h == "batch").unwrap(),
        header.iter().position(|h| *h == "alpha").unwrap(),
    );
    let mut found = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let t: u64 = f[bi].parse().unwrap();
        if [0, 1, 5000, 10_000, 20_000].contains(&t) {
            let alpha: f64 = f[ai].parse().unwrap();
            let want = (t as f64 / 10_000.0).min(1.0);
            found.push((t, alpha, alpha == want));
        }
    }
    let pass = found.len() == 5 && found.iter().all(|f| f.2);
    let shown: Vec<String> = found.iter().map(|(t, a, _)| format!("alpha({t}) = {a}")).collect();
    verdict(pass, shown.join(", "))
}

fn full_run(dir: &Path, corpus: &Path) -> Vec<(String, Vec<u8>)> {
    let cfg = RunConfig {
        epochs: 2,
        corpus: Some(corpus.join("pairs.tsv")),
        embeddings: Some(corpus.join("embeddings.txt")),
        output: dir.to_path_buf(),
        ..RunConfig::default()
    };
    let data = Dataset::load(&cfg).unwrap();
    let out = train(&cfg, &data).unwrap();
    let ctx = EvalContext {
        cfg: &cfg,
        model: &out.model,
        clusters: out.clusters.as_ref(),
    };
    for split in [Split::Valid, Split::Test] {
        evaluate_model(ctx, &data, split).unwrap().write(dir).unwrap();
    }
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "json" || x == "tsv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate_synthetic_corpus(&SyntheticConfig {
        n_contexts: 150,
        ..SyntheticConfig::default()
    })
    .unwrap();
    corpus.write(&dir.path().join("corpus")).unwrap();
    let a = full_run(&dir.path().join("a"), &dir.path().join("corpus"));
    let b = full_run(&dir.path().join("b"), &dir.path().join("corpus"));
    let names: Vec<&str> = a.iter().map(|f| f.0.as_str()).collect();
    let expected = ["eval_test.json", "eval_valid.json", "train_report.csv"];
    let pass = a == b && expected.iter().all(|n| names.contains(n));
    verdict(pass, format!("{} artifacts byte-identical across two runs: {names:?}", a.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("theory reproduction", theory_reproduction),
        ("KL correctness", kl_correctness),
        ("gradient fidelity", gradient_fidelity),
        ("algorithm-trace equivalence", algorithm_trace),
        ("degeneration property", degeneration),
        ("desk-scale behavioral reproduction", behavioral),
        ("metric oracle equivalence", metric_oracles),
        ("annealing schedule", annealing),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let v = check();
        println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
