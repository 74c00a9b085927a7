use d3dp::camera::{project, DEFAULT_Z_MIN};
use d3dp::metrics::mpjpe;
use d3dp::synth::{gen_hypotheses, gen_poses, scenario_hypotheses, HypothesisModel, ScenarioConfig};
use d3dp::RngStream;
use nalgebra::Vector3;

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn iid_mean_error_matches_chi_mean() {
    let cfg = ScenarioConfig {
        poses: 200,
        hypotheses: 20,
        hypothesis_model: HypothesisModel::IidGaussian { sigma_mm: 20.0 },
        seed: 3,
        ..ScenarioConfig::default()
    };
    let data = gen_poses(&cfg).unwrap();
    let mut total = 0.0;
    let mut count = 0;
    for (i, s) in data.iter().enumerate() {
        for h in &scenario_hypotheses(&cfg, i, &s.gt).unwrap() {
            total += mpjpe(h, &s.gt).unwrap();
            count += 1;
        }
    }
    let measured = total / count as f64;

    // Monte-Carlo estimate of E|N(0, 20^2 I_3)| from an unrelated stream.
    let mut rng = RngStream::named(99, "chi-oracle", 0);
    let n = 100_000;
    let oracle = (0..n)
        .map(|_| 20.0 * Vector3::new(rng.normal(), rng.normal(), rng.normal()).norm())
        .sum::<f64>()
        / n as f64;
    assert!((measured / oracle - 1.0).abs() < 0.02, "{measured} vs {oracle}");
}

#[test]
fn depth_ray_error_ignores_the_along_ray_component() {
    let cfg = ScenarioConfig {
        poses: 60,
        seed: 4,
        ..ScenarioConfig::default()
    };
    let model = HypothesisModel::DepthRay {
        sigma_ray: 50.0,
        sigma_perp: 20.0,
    };
    let mut along = Vec::new();
    let mut reproj = Vec::new();
    let mut rng = RngStream::new(4, 0);
    for s in gen_poses(&cfg).unwrap() {
        let x = project(&s.gt, &cfg.camera).unwrap();
        let hs = gen_hypotheses(&s.gt, &model, 10, &mut rng).unwrap();
        for h in &hs {
            for ((p, g), q) in h.points().iter().zip(s.gt.points()).zip(x.points()) {
                let g = Vector3::from(*g);
                along.push((Vector3::from(*p) - g).dot(&g.normalize()));
                let uv = cfg.camera.project_point(*p, DEFAULT_Z_MIN).unwrap();
                reproj.push(((uv[0] - q[0]).powi(2) + (uv[1] - q[1]).powi(2)).sqrt());
            }
        }
    }
    assert!(along.len() >= 10_000);
    let r = pearson(&along, &reproj);
    assert!(r.abs() < 0.05, "r = {r}");
}
