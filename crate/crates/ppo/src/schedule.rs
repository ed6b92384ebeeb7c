/// Linear learning-rate decay from `start` at step 0 to `end` at `total`.
/// Steps beyond `total` stay at `end`.
pub fn lr_schedule(global_step: u64, total_steps: u64, start: f64, end: f64) -> f64 {
    if total_steps == 0 {
        return end;
    }
    let frac = (global_step as f64 / total_steps as f64).min(1.0);
    (1.0 - frac) * start + frac * end
}
