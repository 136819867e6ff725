//! Cylinder contraction under a prescribed activation band, independent of
//! the electrophysiology.

use gastroem::axisym::AxisymModel;
use gastroem::mixture::MixtureParams;
use gastroem::presets::cyl250;

#[test]
fn alpha_sweep_under_a_gaussian_band() {
    let s = cyl250();
    let base = AxisymModel::new(s.axisym.clone(), s.material.clone()).unwrap();
    let pre = base.prestress_solve().unwrap().state;
    let gamma: Vec<f64> = base.midpoints().iter().map(|x| 0.8 * (-((x - 125.0) / 15.0f64).powi(2)).exp()).collect();
    let alphas = [0.0, 0.2, 0.4, 0.6];
    let grid: Vec<Vec<(f64, f64)>> = alphas
        .iter()
        .map(|&ac| {
            alphas
                .iter()
                .map(|&al| {
                    let mat = MixtureParams { alpha_c: ac, alpha_l: al, ..s.material.clone() };
                    let m = AxisymModel::new(s.axisym.clone(), mat).unwrap();
                    let t = m.frozen_activation(&pre, &gamma, s.coupling.frozen_steps, s.coupling.window).unwrap();
                    let last = t.metrics.last().unwrap();
                    (last.a_c, last.h_t_max)
                })
                .collect()
        })
        .collect();
    // circumferential contraction drives the radial amplitude
    for j in 0..4 {
        for i in 1..4 {
            assert!(grid[i][j].0 > grid[i - 1][j].0, "A_c not increasing in alpha_c at {i},{j}: {grid:?}");
        }
    }
    // longitudinal contraction drives wall thickening
    for row in &grid {
        assert!(row.windows(2).all(|w| w[1].1 > w[0].1), "h_t not increasing in alpha_l: {row:?}");
    }
    assert!(grid.iter().flatten().any(|&(_, h)| h > 1.5 * s.axisym.thickness));
    assert!((11.0..=21.0).contains(&grid[3][0].0), "A_c(0.6, 0) = {}", grid[3][0].0);
    assert!(grid[0][0].0 < 1e-6);
}
