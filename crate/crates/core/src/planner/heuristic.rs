use crate::so3::{geodesic_distance, quat_from_axis_angle, RotationAxis, UnitQuat};

/// Greedy baseline: STOP inside `threshold`, otherwise the axis whose
/// nominal step lands closest to the goal. Ties go to the earlier axis in
/// the order +x, −x, +y, −y, +z, −z.
pub fn heuristic_plan(q: &UnitQuat, goal: &UnitQuat, step_angle: f64, threshold: f64) -> RotationAxis {
    if geodesic_distance(q, goal) < threshold {
        return RotationAxis::Stop;
    }
    let mut best = RotationAxis::PosX;
    let mut best_d = f64::INFINITY;
    for axis in RotationAxis::ROTATIONS {
        let step = quat_from_axis_angle(axis, step_angle).expect("rotation axis");
        let d = geodesic_distance(&(step * *q), goal);
        if d < best_d {
            best_d = d;
            best = axis;
        }
    }
    best
}
