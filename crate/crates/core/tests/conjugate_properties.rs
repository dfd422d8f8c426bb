use dpclust::conjugate::{
    log_marginal_background, log_marginal_regular, log_marginal_stacked, log_mvt, log_predictive, ClusterStats,
    DesignBlock, NigModel, NormalGammaSpec,
};
use dpclust::rng::RngStream;
use dpclust::verify::random_conjugate_instance;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use std::f64::consts::PI;

// Stacked marginal written out from scratch: y ~ t_{2a}(μ, (b/a)(I + W t⁻¹ W')).
fn stacked_oracle(rows: &[Vec<f64>], design: &DesignBlock, prior: &NormalGammaSpec) -> f64 {
    let s = design.samples();
    let (w, shift) = match &prior.fixed_delta {
        Some(d0) => (design.x().clone(), design.z() * d0),
        None => (design.combined(), DVector::zeros(s)),
    };
    let e = rows.len();
    let big = e * s;
    let mut ws = DMatrix::zeros(big, w.ncols());
    let mut y = DVector::zeros(big);
    let mut mu = DVector::zeros(big);
    let item_mean = &shift + &w * &prior.mean;
    for (r, row) in rows.iter().enumerate() {
        for t in 0..s {
            y[r * s + t] = row[t];
            mu[r * s + t] = item_mean[t];
            for c in 0..w.ncols() {
                ws[(r * s + t, c)] = w[(t, c)];
            }
        }
    }
    let tinv = prior.precision.clone().try_inverse().unwrap();
    let cov = (DMatrix::identity(big, big) + &ws * tinv * ws.transpose()) * (prior.b / prior.a);
    let nu = 2.0 * prior.a;
    let d = big as f64;
    let det = cov.determinant();
    let r = &y - &mu;
    let q = (r.transpose() * cov.try_inverse().unwrap() * &r)[0];
    statrs::function::gamma::ln_gamma((nu + d) / 2.0)
        - statrs::function::gamma::ln_gamma(nu / 2.0)
        - 0.5 * d * (nu * PI).ln()
        - 0.5 * det.ln()
        - 0.5 * (nu + d) * (1.0 + q / nu).ln()
}

#[test]
fn marginals_match_hand_written_stacked_t() {
    let mut rng = RngStream::new(11);
    for k in 0..200 {
        let (design, prior, rows) = random_conjugate_instance(&mut rng, k % 2 == 0, 3).unwrap();
        let stats = ClusterStats::from_items(design.samples(), rows.iter().map(Vec::as_slice));
        let fast = if prior.is_background() {
            log_marginal_background(&stats, &design, &prior).unwrap()
        } else {
            log_marginal_regular(&stats, &design, &prior).unwrap()
        };
        let oracle = stacked_oracle(&rows, &design, &prior);
        let lib: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        assert!((fast - oracle).abs() < 1e-8, "{fast} vs {oracle}");
        assert!((log_marginal_stacked(&lib, &design, &prior).unwrap() - oracle).abs() < 1e-8);
    }
}

#[test]
fn no_x_block_equals_zero_x_column() {
    let mut rng = RngStream::new(3);
    for _ in 0..50 {
        let (design, prior, rows) = random_conjugate_instance(&mut rng, false, 5).unwrap();
        let kz = design.z().ncols();
        let z_only = DesignBlock::z_only(design.z().clone()).unwrap();
        let p_z = NormalGammaSpec::regular(
            prior.a,
            prior.b,
            prior.mean.rows(0, kz).into_owned(),
            prior.precision.view((0, 0), (kz, kz)).into_owned(),
        )
        .unwrap();
        // zero X column with an independent prior block
        let zero_x = DesignBlock::new(design.z().clone(), DMatrix::zeros(design.samples(), 1)).unwrap();
        let p_zx = NormalGammaSpec::regular_blocks(
            prior.a,
            prior.b,
            p_z.mean.clone(),
            p_z.precision.clone(),
            DVector::from_element(1, 0.3),
            DMatrix::from_element(1, 1, 2.0),
        )
        .unwrap();
        let st = ClusterStats::from_items(design.samples(), rows.iter().map(Vec::as_slice));
        let a = log_marginal_regular(&st, &z_only, &p_z).unwrap();
        let b = log_marginal_regular(&st, &zero_x, &p_zx).unwrap();
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn student_t_approaches_normal() {
    let x = DVector::from_vec(vec![0.3, -1.2, 0.7]);
    let mean = DVector::from_vec(vec![0.0, -1.0, 1.0]);
    let scale = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.2, 0.0, 0.2, 1.5]);
    let t = log_mvt(&x, 1e6, &mean, &scale).unwrap();
    let r = &x - &mean;
    let q = (r.transpose() * scale.clone().try_inverse().unwrap() * &r)[0];
    let normal = -1.5 * (2.0 * PI).ln() - 0.5 * scale.determinant().ln() - 0.5 * q;
    assert!((t - normal).abs() < 1e-4, "{t} vs {normal}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn telescoping_holds_in_any_order(seed in any::<u64>(), background in any::<bool>()) {
        let mut rng = RngStream::new(seed);
        let (design, prior, rows) = random_conjugate_instance(&mut rng, background, 5).unwrap();
        let s = design.samples();
        let full = NigModel::new(&prior, &design).unwrap()
            .log_marginal_stats(&ClusterStats::from_items(s, rows.iter().map(Vec::as_slice)));
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.shuffle(&mut rng);
        let mut st = ClusterStats::empty(s);
        let mut sum = 0.0;
        for &i in &order {
            sum += log_predictive(&rows[i], &st, &design, &prior).unwrap();
            st.add(&rows[i]);
        }
        prop_assert!((sum - full).abs() < 1e-8, "{} vs {}", sum, full);
    }

    #[test]
    fn add_then_remove_restores_marginal(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed);
        let (design, prior, rows) = random_conjugate_instance(&mut rng, false, 5).unwrap();
        let model = NigModel::new(&prior, &design).unwrap();
        let s = design.samples();
        let mut st = ClusterStats::from_items(s, rows.iter().map(Vec::as_slice));
        let before = model.log_marginal_stats(&st);
        let extra: Vec<f64> = (0..s).map(|k| 3.0 * (k as f64) - 1.0).collect();
        st.add(&extra);
        st.remove(&extra);
        prop_assert!((model.log_marginal_stats(&st) - before).abs() < 1e-10);
    }
}
