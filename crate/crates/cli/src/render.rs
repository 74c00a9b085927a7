//! SVG rendering of a ground-truth pose and its hypotheses in image space.

use std::fmt::Write;

use d3dp::camera::{CameraIntrinsics, DEFAULT_Z_MIN};
use d3dp::{PoseSeq3D, Skeleton};

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Renders `frame` of the ground truth (solid) and each hypothesis (dashed,
/// one colour per hypothesis). Joints behind the camera are left out and
/// reported in `warnings`.
pub fn render_frame(
    frame: usize,
    gt: Option<&PoseSeq3D>,
    hypotheses: &[PoseSeq3D],
    skeleton: &Skeleton,
    camera: &CameraIntrinsics,
    size: (f64, f64),
    warnings: &mut Vec<String>,
) -> String {
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = size.0,
        h = size.1
    )
    .unwrap();
    writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##).unwrap();
    for (h, pose) in hypotheses.iter().enumerate() {
        let colour = PALETTE[h % PALETTE.len()];
        let style = format!(r#"stroke="{colour}" stroke-width="1.5" stroke-dasharray="4 3" fill="none""#);
        draw(&mut svg, &format!("hypothesis {h}"), pose, frame, skeleton, camera, &style, warnings);
    }
    if let Some(gt) = gt {
        let style = r##"stroke="#000000" stroke-width="2.5" fill="none""##;
        draw(&mut svg, "ground truth", gt, frame, skeleton, camera, style, warnings);
    }
    svg.push_str("</svg>\n");
    svg
}

#[allow(clippy::too_many_arguments)]
fn draw(
    svg: &mut String,
    label: &str,
    pose: &PoseSeq3D,
    frame: usize,
    skeleton: &Skeleton,
    camera: &CameraIntrinsics,
    style: &str,
    warnings: &mut Vec<String>,
) {
    let uv: Vec<Option<[f64; 2]>> = pose
        .frame(frame)
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let r = camera.project_point(*p, DEFAULT_Z_MIN);
            if r.is_none() {
                warnings.push(format!("frame {frame}, {label}: joint {j} is behind the camera and was omitted"));
            }
            r
        })
        .collect();
    writeln!(svg, r#"<g {style}>"#).unwrap();
    for j in 0..uv.len() {
        let Some(parent) = skeleton.parent(j) else { continue };
        if let (Some(a), Some(b)) = (uv[parent], uv[j]) {
            writeln!(
                svg,
                r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#,
                a[0], a[1], b[0], b[1]
            )
            .unwrap();
        }
    }
    for p in uv.iter().flatten() {
        writeln!(svg, r#"<circle cx="{:.3}" cy="{:.3}" r="2"/>"#, p[0], p[1]).unwrap();
    }
    svg.push_str("</g>\n");
}
