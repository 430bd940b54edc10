//! Built-in input fields.

use std::f64::consts::PI;

use anyhow::{bail, Result};
use bogotool_core::{Field, UniformGrid};

type Profile = fn(&[f64]) -> f64;

fn bump(x: &[f64], s: f64) -> f64 {
    (-s * x.iter().map(|v| v * v).sum::<f64>()).exp()
}

/// Mean-zero profiles on `(-½, ½)^n`.
fn profiles(n: usize) -> &'static [(&'static str, Profile)] {
    match n {
        1 => &[
            ("sin", |x| (2.0 * PI * x[0]).sin()),
            ("cos2", |x| (4.0 * PI * x[0]).cos()),
            ("gauss-x", |x| x[0] * bump(x, 20.0)),
        ],
        2 => &[
            ("gauss-dx", |x| -40.0 * x[0] * bump(x, 20.0)),
            ("gauss-dy", |x| -60.0 * x[1] * bump(x, 30.0)),
            ("quadrupole", |x| x[0] * x[1] * bump(x, 25.0)),
            ("wave", |x| (2.0 * PI * x[0]).sin() * bump(x, 15.0)),
            ("shear", |x| {
                x[0] * (1.0 - 20.0 * x[1] * x[1]) * bump(x, 18.0)
            }),
        ],
        _ => &[],
    }
}

pub fn bogovskii_names(n: usize) -> Vec<&'static str> {
    profiles(n).iter().map(|p| p.0).collect()
}

/// The profile `name` rescaled to the cube `λ(-½, ½)^n` and sampled on `grid`.
pub fn bogovskii_field(name: &str, grid: &UniformGrid, lambda: f64) -> Result<Field> {
    let n = grid.dim();
    let Some((_, f)) = profiles(n).iter().find(|p| p.0 == name) else {
        bail!(
            "unknown preset {name:?} for n = {n}; known: {:?}",
            bogovskii_names(n)
        );
    };
    let mut y = vec![0.0; n];
    Ok(Field::scalar_from_fn(grid.clone(), |x| {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi / lambda;
        }
        f(&y)
    }))
}

/// A smooth function on the plane with its partial derivatives.
pub struct Analytic {
    pub name: &'static str,
    pub f: Profile,
    pub df: [Profile; 2],
}

fn gauss(x: &[f64]) -> f64 {
    (-10.0 * ((x[0] - 0.4).powi(2) + (x[1] - 0.6).powi(2))).exp()
}

fn rational(x: &[f64]) -> f64 {
    1.0 + 4.0 * (x[0] * x[0] + x[1] * x[1])
}

/// Five analytic test functions for difference-quotient bounds.
pub fn analytic_family() -> [Analytic; 5] {
    [
        Analytic {
            name: "wave",
            f: |x| (2.0 * PI * x[0]).sin() * (PI * x[1]).cos(),
            df: [
                |x| 2.0 * PI * (2.0 * PI * x[0]).cos() * (PI * x[1]).cos(),
                |x| -PI * (2.0 * PI * x[0]).sin() * (PI * x[1]).sin(),
            ],
        },
        Analytic {
            name: "gauss",
            f: gauss,
            df: [
                |x| -20.0 * (x[0] - 0.4) * gauss(x),
                |x| -20.0 * (x[1] - 0.6) * gauss(x),
            ],
        },
        Analytic {
            name: "cubic",
            f: |x| x[0].powi(3) - 2.0 * x[1] * x[1] + x[0] * x[1],
            df: [|x| 3.0 * x[0] * x[0] + x[1], |x| -4.0 * x[1] + x[0]],
        },
        Analytic {
            name: "front",
            f: |x| (5.0 * (x[0] - 0.5)).tanh() + 0.5 * (3.0 * x[1]).sin(),
            df: [
                |x| 5.0 / (5.0 * (x[0] - 0.5)).cosh().powi(2),
                |x| 1.5 * (3.0 * x[1]).cos(),
            ],
        },
        Analytic {
            name: "rational",
            f: |x| 1.0 / rational(x),
            df: [
                |x| -8.0 * x[0] / rational(x).powi(2),
                |x| -8.0 * x[1] / rational(x).powi(2),
            ],
        },
    ]
}
