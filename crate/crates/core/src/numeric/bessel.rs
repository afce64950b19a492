/// Below this magnitude the power series is used; above it, Miller's
/// backward recurrence normalized with `J0 + 2 * sum J_2k = 1`.
const SERIES_LIMIT: f64 = 4.0;

/// J0 and J1 of the first kind for finite `x`, absolute error ~1e-15 on |x| <= 50.
pub fn bessel_j0_j1(x: f64) -> (f64, f64) {
    let ax = libm::fabs(x);
    let (j0, j1) = if ax <= SERIES_LIMIT {
        series(ax)
    } else {
        miller(ax)
    };
    (j0, if x < 0.0 { -j1 } else { j1 })
}

pub fn bessel_j0_unchecked(x: f64) -> f64 {
    bessel_j0_j1(x).0
}

pub fn bessel_j1_unchecked(x: f64) -> f64 {
    bessel_j0_j1(x).1
}

fn series(x: f64) -> (f64, f64) {
    let q = 0.25 * x * x;
    let mut t0 = 1.0;
    let mut t1 = 0.5 * x;
    let mut j0 = t0;
    let mut j1 = t1;
    for k in 1..60 {
        let kf = k as f64;
        t0 *= -q / (kf * kf);
        t1 *= -q / (kf * (kf + 1.0));
        j0 += t0;
        j1 += t1;
        if libm::fabs(t0) < 1e-18 && libm::fabs(t1) < 1e-18 {
            break;
        }
    }
    (j0, j1)
}

fn miller(x: f64) -> (f64, f64) {
    // J_n(x) is negligible once n exceeds x by a few multiples of x^(1/3).
    let start = ((1.2 * x) as usize + 40) & !1;
    let mut above = 0.0; // J_{n+1}
    let mut current = 1.0; // J_n, arbitrary scale
    let mut norm = 2.0 * current;
    let mut j1 = 0.0;
    for n in (1..=start).rev() {
        let below = (2.0 * n as f64 / x) * current - above;
        above = current;
        current = below;
        let order = n - 1;
        if order == 1 {
            j1 = current;
        } else if order > 0 && order % 2 == 0 {
            norm += 2.0 * current;
        }
        if libm::fabs(current) > 1e200 {
            current *= 1e-200;
            above *= 1e-200;
            norm *= 1e-200;
            j1 *= 1e-200;
        }
    }
    norm += current;
    (current / norm, j1 / norm)
}
