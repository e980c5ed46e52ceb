/// Perturb-and-observe state. `last_power` is `None` until the first
/// observation, which only records a baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpptState {
    pub duty: f64,
    pub step: f64,
    pub last_power: Option<f64>,
    pub direction: f64,
    pub d_min: f64,
    pub d_max: f64,
}

impl MpptState {
    pub fn new(duty: f64, step: f64) -> Self {
        Self { duty: duty.clamp(0.1, 0.85), step, last_power: None, direction: 1.0, d_min: 0.1, d_max: 0.85 }
    }
}

impl Default for MpptState {
    fn default() -> Self {
        Self::new(0.65, 0.01)
    }
}

pub fn mppt_step(mppt: &MpptState, v_pv: f64, i_pv: f64) -> MpptState {
    let power = v_pv * i_pv;
    let mut next = *mppt;
    next.last_power = Some(power);
    let Some(prev) = mppt.last_power else {
        return next;
    };
    if power <= prev {
        next.direction = -mppt.direction;
    }
    next.duty = (mppt.duty + next.direction * mppt.step).clamp(mppt.d_min, mppt.d_max);
    next
}
