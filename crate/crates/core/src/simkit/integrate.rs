use crate::plant::{moving_derivatives, stiction_holds, AxisParams, DerivedConstants, PlantState};

/// Classic fourth-order Runge–Kutta step for a two-state system.
pub fn rk4<F>(y: [f64; 2], h: f64, f: F) -> [f64; 2]
where
    F: Fn([f64; 2]) -> [f64; 2],
{
    let k1 = f(y);
    let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
    let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
    let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1]]);
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Outcome of one plant substep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Substep {
    pub state: PlantState,
    /// The carrier was pinned at a travel limit during this step.
    pub hit_limit: bool,
}

/// Advances the plant by `h` under constant `va`.
///
/// The stiction gate is evaluated at the substep boundary: a resting carrier
/// inside the deadzone is frozen for the whole step. Inside the step the
/// dynamics are linear. Positions are clamped to the travel limits and
/// velocity into a limit is zeroed.
pub fn advance_plant(p: &AxisParams, dc: &DerivedConstants, s: &PlantState, va: f64, h: f64) -> Substep {
    let t = s.t + h;
    if stiction_holds(p, s.vel, va) {
        return Substep {
            state: PlantState {
                pos: s.pos,
                vel: 0.0,
                t,
            },
            hit_limit: false,
        };
    }
    let [pos, mut vel] = rk4([s.pos, s.vel], h, |y| {
        let (dp, dv) = moving_derivatives(p, dc, y[1], va);
        [dp, dv]
    });
    // Passing through zero velocity inside the deadzone means the carrier
    // came to rest during the step; static friction keeps it there.
    if vel * s.vel < 0.0 && va.abs() < p.v_deadzone {
        vel = 0.0;
    }
    let mut next = PlantState { pos, vel, t };
    let mut hit_limit = false;
    if next.pos < p.travel_min {
        next.pos = p.travel_min;
        next.vel = next.vel.max(0.0);
        hit_limit = true;
    } else if next.pos > p.travel_max {
        next.pos = p.travel_max;
        next.vel = next.vel.min(0.0);
        hit_limit = true;
    }
    Substep { state: next, hit_limit }
}
