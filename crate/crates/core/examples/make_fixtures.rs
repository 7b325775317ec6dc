//! Regenerates the synthetic surround-view fixtures under `fixtures/`.
//!
//! ```text
//! cargo run -p parkslot --example make_fixtures -- fixtures
//! ```

use std::path::PathBuf;

use parkslot::ipm::{render_ground_view, FisheyeCamera, LensModel, Pose, Rig};
use parkslot::Point2;

fn camera(name: &str, position: [f64; 3], yaw: f64, pitch: f64) -> FisheyeCamera<f64> {
    FisheyeCamera {
        name: name.into(),
        model: LensModel::KannalaBrandt,
        focal: [380.0, 380.0],
        principal: [639.5, 399.5],
        distortion: [0.05, -0.01, 0.002, -0.0005],
        pose: Pose::from_mount(position, yaw, pitch),
        image_size: (1280, 800),
        max_fov_deg: 190.0,
    }
}

/// Compact car: 4.6 m x 1.9 m, cameras in the bumpers and mirrors.
fn surround_rig() -> Rig<f64> {
    Rig::new(vec![
        camera("front", [0.0, 2.3, 0.7], 0.0, 40.0),
        camera("rear", [0.0, -2.3, 0.9], 180.0, 40.0),
        camera("left", [-0.95, 0.8, 1.0], -90.0, 60.0),
        camera("right", [0.95, 0.8, 1.0], 90.0, 60.0),
    ])
    .expect("fixture rig is valid")
}

/// Asphalt with two rows of perpendicular slots (2.5 m x 5 m) either side
/// of a 6 m aisle.
fn parking_lot(g: Point2<f64>) -> [f64; 3] {
    const ASPHALT: [f64; 3] = [88.0, 90.0, 92.0];
    const PAINT: [f64; 3] = [235.0, 235.0, 225.0];
    let half = 0.075;
    let in_row = |x: f64| (3.0..=8.0).contains(&x.abs());
    let divider =
        (g.y / 2.5 - (g.y / 2.5).round()).abs() * 2.5 < half && in_row(g.x) && g.y.abs() <= 10.0;
    let entrance = ((g.x.abs() - 3.0).abs() < half) && g.y.abs() <= 10.0 + half;
    if divider || entrance {
        PAINT
    } else {
        ASPHALT
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir)?;
    let rig = surround_rig();
    std::fs::write(dir.join("rig.toml"), rig.to_toml_string())?;
    for cam in &rig.cameras {
        let img = render_ground_view(cam, 2, [150, 180, 210], parking_lot);
        img.save(dir.join(format!("{}.png", cam.name)))?;
    }
    Ok(())
}
