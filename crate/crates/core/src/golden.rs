//! Published reference data for the four-cell (`L = 2`) scenario: the
//! initial datum, one Brownian path sampled at quarter times, and the
//! resulting trajectories.
//!
//! Scenario: `Λ = (-1,1)²`, `T = 1`, `a = 10`, `ε = (T/N)³ / 10`.

use crate::mesh::SeparablePolynomial;

/// The quartic initial datum, non-symmetric and in `[0, 1]`, with zero normal
/// derivative on `∂Λ`.
///
/// The factor with leading coefficient `1/16` varies along the second axis.
/// With cells numbered `n = L·k + m` (`k` the x-index) this is the
/// orientation under which the cell means come out as [`INITIAL_L2`].
pub fn initial_datum() -> SeparablePolynomial {
    SeparablePolynomial::new(
        vec![19.0 / 32.0, 3.0 / 4.0, -3.0 / 16.0, -1.0 / 4.0, 3.0 / 32.0],
        vec![9.0 / 16.0, -3.0 / 4.0, -1.0 / 8.0, 1.0 / 4.0, 1.0 / 16.0],
    )
}

/// Cell means of [`initial_datum`] on the `L = 2` mesh (8 digits).
pub const INITIAL_L2: [f64; 4] = [0.20088542, 0.05244792, 0.72953125, 0.19046875];

/// Mean of [`initial_datum`] over `Λ` (8 digits).
pub const INITIAL_MEAN: f64 = 0.29333333;

/// Brownian increments over `(0,¼], (¼,½], (½,¾], (¾,1]`.
pub const QUARTER_INCREMENTS: [f64; 4] = [
    -0.6046086559049673,
    0.6937104821525855,
    -1.1713571186231886,
    0.24606633895637547,
];

pub const AMPLITUDE: f64 = 10.0;
pub const EPS_COEFFICIENT: f64 = 0.1;
/// Reference runs use `ε = 0.1·τ^{1/3}`.
pub const EPS_EXPONENT: f64 = 1.0 / 3.0;

/// Splitting method, `N = 2`, states after steps 1 and 2.
pub const SPLITTING_N2: [[f64; 4]; 2] = [
    [0.39495382, 0.24383317, 0.64814013, 0.38692093],
    [-0.23254276, -0.21628772, -0.21627557, -0.23198247],
];

/// Stochastic heat equation (`ψ_ε ≡ 0`), `N = 2`.
pub const HEAT_N2: [[f64; 4]; 2] = [
    [0.39495382, 0.24383317, 0.64814013, 0.38692093],
    [-1.69747036, -1.57881501, -1.57872628, -1.69338044],
];

/// Splitting method, `N = 4`, states after steps 1 to 4.
pub const SPLITTING_N4: [[f64; 4]; 4] = [
    [-0.13385192, -0.07727270, -0.10617873, -0.13010620],
    [-0.02478902, -0.01854758, -0.02242615, -0.02428642],
    [-0.00476855, -0.00406696, -0.00458739, -0.00470111],
    [-0.00093698, -0.00085652, -0.00092635, -0.00092793],
];
