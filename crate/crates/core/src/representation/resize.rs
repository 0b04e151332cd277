use crate::frame::RgbFrame;

/// Source sample positions for one output axis (pixel-center aligned).
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let pos = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, (pos - lo as f64) as f32)
        })
        .collect()
}

/// Bilinear resize, each channel interpolated independently.
pub fn resize_frame(frame: &RgbFrame, new_width: usize, new_height: usize) -> RgbFrame {
    assert!(new_width >= 1 && new_height >= 1, "resize target must be at least 1x1");
    if frame.width() == new_width && frame.height() == new_height {
        return frame.clone();
    }
    let xs = axis_taps(frame.width(), new_width);
    let ys = axis_taps(frame.height(), new_height);
    let src = frame.as_bytes();
    let stride = frame.width() * 3;
    let mut out = Vec::with_capacity(new_width * new_height * 3);
    for &(y0, y1, fy) in &ys {
        let r0 = &src[y0 * stride..(y0 + 1) * stride];
        let r1 = &src[y1 * stride..(y1 + 1) * stride];
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let top = f32::from(r0[x0 * 3 + c]) * (1.0 - fx) + f32::from(r0[x1 * 3 + c]) * fx;
                let bot = f32::from(r1[x0 * 3 + c]) * (1.0 - fx) + f32::from(r1[x1 * 3 + c]) * fx;
                let v = top * (1.0 - fy) + bot * fy;
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RgbFrame::from_raw(new_width, new_height, out).expect("sized buffer")
}
