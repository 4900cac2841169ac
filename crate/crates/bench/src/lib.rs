//! Shared inputs for the criterion benches in `benches/`.

use fovea_core::{Color, FieldMap, Grid, Orientation, Stimulus, World};

/// The four-bar scene with one blue 45° target.
pub fn fig3_world() -> World {
    use Color::*;
    use Orientation::*;
    World::new(vec![
        Stimulus::new(-10.0, -8.0, Green, Deg135),
        Stimulus::new(8.0, -10.0, Blue, Deg135),
        Stimulus::new(-9.0, 9.0, Green, Deg45),
        Stimulus::new(10.0, 8.0, Blue, Deg45),
    ])
    .expect("fig3 scene is valid")
}

/// A default-grid field holding two Gaussian bumps of unequal height.
pub fn two_bumps(tau: f64) -> FieldMap {
    let grid = Grid::default();
    let mut u = grid.zeros();
    for y in 0..grid.height {
        for x in 0..grid.width {
            let bump = |cx: f64, cy: f64, a: f64| {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                a * (-d2 / 8.0).exp()
            };
            u[grid.index(x, y)] = bump(12.0, 14.0, 0.9) + bump(28.0, 26.0, 0.6);
        }
    }
    let mut field = FieldMap::new(grid, tau).expect("tau is positive");
    field.set_activity(&u).expect("activity matches the grid");
    field
}
