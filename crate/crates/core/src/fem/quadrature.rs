//! Gauss–Legendre rules mapped to the reference cell `[0, 1]`:
//! `(node, weight)` pairs with weights summing to 1.

const G2: f64 = 0.288_675_134_594_812_9; // 1 / (2 sqrt 3)

pub const GAUSS2: [(f64, f64); 2] = [(0.5 - G2, 0.5), (0.5 + G2, 0.5)];

// nodes ±sqrt(5 ∓ 2 sqrt(10/7)) / 3 on [-1, 1]
const N1: f64 = 0.538_469_310_105_683_1;
const N2: f64 = 0.906_179_845_938_664;
const W0: f64 = 0.568_888_888_888_888_9;
const W1: f64 = 0.478_628_670_499_366_5;
const W2: f64 = 0.236_926_885_056_189_1;

pub const GAUSS5: [(f64, f64); 5] = [
    (0.5 * (1.0 - N2), 0.5 * W2),
    (0.5 * (1.0 - N1), 0.5 * W1),
    (0.5, 0.5 * W0),
    (0.5 * (1.0 + N1), 0.5 * W1),
    (0.5 * (1.0 + N2), 0.5 * W2),
];
