//! Elementwise arithmetic, activations, and whole-tensor reductions.



use ndarray::{ArrayD, IxDyn, Zip};

use crate::element::Element;
use crate::tape::{common_tape, Arr, Var};

fn check_same_shape<E: Element>(a: &Var<E>, b: &Var<E>, op: &str) {
    assert_eq!(
        a.shape(),
        b.shape(),
        "{op}: shape mismatch {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
}

impl<E: Element> Var<E> {
    pub fn add(&self, other: &Var<E>) -> Var<E> {
        check_same_shape(self, other, "add");
        let out = &self.data + &other.data;
        let Some(tape) = common_tape(&[self, other]) else {
            return Var::constant(out);
        };
        let (pa, pb) = (self.node, other.node);
        let id = tape.push(Box::new(move |g, sink| {
            if let Some(p) = pa {
                sink(p, g.clone());
            }
            if let Some(p) = pb {
                sink(p, g.clone());
            }
        }));
        Var::tracked(out, id, tape)
    }

    pub fn sub(&self, other: &Var<E>) -> Var<E> {
        check_same_shape(self, other, "sub");
        let out = &self.data - &other.data;
        let Some(tape) = common_tape(&[self, other]) else {
            return Var::constant(out);
        };
        let (pa, pb) = (self.node, other.node);
        let id = tape.push(Box::new(move |g, sink| {
            if let Some(p) = pa {
                sink(p, g.clone());
            }
            if let Some(p) = pb {
                sink(p, g.mapv(|v| -v));
            }
        }));
        Var::tracked(out, id, tape)
    }

    pub fn mul(&self, other: &Var<E>) -> Var<E> {
        check_same_shape(self, other, "mul");
        let out = &self.data * &other.data;
        let Some(tape) = common_tape(&[self, other]) else {
            return Var::constant(out);
        };
        let (pa, pb) = (self.node, other.node);
        let (da, db) = (self.data.clone(), other.data.clone());
        let id = tape.push(Box::new(move |g, sink| {
            if let Some(p) = pa {
                sink(p, g * &db);
            }
            if let Some(p) = pb {
                sink(p, g * &da);
            }
        }));
        Var::tracked(out, id, tape)
    }

    pub fn neg(&self) -> Var<E> {
        self.scale(-1.0)
    }

    pub fn scale(&self, factor: f64) -> Var<E> {
        let f = E::of_f64(factor);
        let out = self.data.mapv(|v| v * f);
        let Some(tape) = common_tape(&[self]) else {
            return Var::constant(out);
        };
        let p = self.node;
        let id = tape.push(Box::new(move |g, sink| {
            if let Some(p) = p {
                sink(p, g.mapv(|v| v * f));
            }
        }));
        Var::tracked(out, id, tape)
    }

    pub fn add_scalar(&self, value: f64) -> Var<E> {
        let c = E::of_f64(value);
        let out = self.data.mapv(|v| v + c);
        let Some(tape) = common_tape(&[self]) else {
            return Var::constant(out);
        };
        let p = self.node;
        let id = tape.push(Box::new(move |g, sink| {
            if let Some(p) = p {
                sink(p, g.clone());
            }
        }));
        Var::tracked(out, id, tape)
    }

    /// Adds a constant array, broadcasting it against `self`.
    pub fn add_const_broadcast(&self, rhs: &Arr<E>) -> Var<E> {
        let out = self.data.to_owned()
            + &rhs
                .broadcast(self.data.raw_dim())
                .unwrap_or_else(|| panic!("broadcast {:?} to {:?}", rhs.shape(), self.shape()));
        let Some(tape) = common_tape(&[self]) else {
            return Var::constant(out);
        };
        let p = self.node;
        let id = tape.push(Box::new(move |g, sink| {
            if let Some(p) = p {
                sink(p, g.clone());
            }
        }));
        Var::tracked(out, id, tape)
    }

    /// `self + other` where `other`'s shape equals `self.shape()[1..]`
    /// (broadcast over the leading axis). Gradient for `other` sums over it.
    pub fn add_broadcast0(&self, other: &Var<E>) -> Var<E> {
        assert_eq!(
            &self.shape()[1..],
            other.shape(),
            "add_broadcast0: {:?} vs {:?}",
            self.shape(),
            other.shape()
        );
        let out = self.data.to_owned() + &other.data.broadcast(self.data.raw_dim()).unwrap();
        let Some(tape) = common_tape(&[self, other]) else {
            return Var::constant(out);
        };
        let (pa, pb) = (self.node, other.node);
        let rhs_dim = IxDyn(other.shape());
        let id = tape.push(Box::new(move |g, sink| {
            if let Some(p) = pa {
                sink(p, g.clone());
            }
            if let Some(p) = pb {
                let lead = g.shape()[0];
                let inner: usize = g.len() / lead;
                let g2 = g.view().into_shape_with_order((lead, inner)).unwrap();
                let summed = g2.sum_axis(ndarray::Axis(0));
                sink(p, summed.into_shape_with_order(rhs_dim.clone()).unwrap());
            }
        }));
        Var::tracked(out, id, tape)
    }

    pub fn leaky_relu(&self, negative_slope: f64) -> Var<E> {
        let s = E::of_f64(negative_slope);
        let zero = E::zero();
        let out = self.data.mapv(|v| if v > zero { v } else { v * s });
        let Some(tape) = common_tape(&[self]) else {
            return Var::constant(out);
        };
        let p = self.node;
        let x = self.data.clone();
        let id = tape.push(Box::new(move |g, sink| {
            if let Some(p) = p {
                let mut dx = g.clone();
                Zip::from(&mut dx).and(&x).for_each(|d, &v| {
                    if v <= zero {
                        *d = *d * s;
                    }
                });
                sink(p, dx);
            }
        }));
        Var::tracked(out, id, tape)
    }

    /// GELU with the tanh approximation.
    pub fn gelu(&self) -> Var<E> {
        let c = E::of_f64((2.0 / std::f64::consts::PI).sqrt());
        let a = E::of_f64(0.044715);
        let half = E::of_f64(0.5);
        let one = E::one();
        let fwd = move |v: E| {
            let u = c * (v + a * v * v * v);
            half * v * (one + u.tanh())
        };
        let out = self.data.mapv(fwd);
        let Some(tape) = common_tape(&[self]) else {
            return Var::constant(out);
        };
        let p = self.node;
        let x = self.data.clone();
        let three = E::of_f64(3.0);
        let id = tape.push(Box::new(move |g, sink| {
            if let Some(p) = p {
                let mut dx = g.clone();
                Zip::from(&mut dx).and(&x).for_each(|d, &v| {
                    let u = c * (v + a * v * v * v);
                    let t = u.tanh();
                    let sech2 = one - t * t;
                    let du = c * (one + three * a * v * v);
                    *d = *d * (half * (one + t) + half * v * sech2 * du);
                });
                sink(p, dx);
            }
        }));
        Var::tracked(out, id, tape)
    }

    pub fn sum_all(&self) -> Var<E> {
        let total = self.data.sum();
        let out = ArrayD::from_elem(IxDyn(&[]), total);
        let Some(tape) = common_tape(&[self]) else {
            return Var::constant(out);
        };
        let p = self.node;
        let dim = self.data.raw_dim();
        let id = tape.push(Box::new(move |g, sink| {
            if let Some(p) = p {
                let gv = *g.iter().next().unwrap();
                sink(p, ArrayD::from_elem(dim.clone(), gv));
            }
        }));
        Var::tracked(out, id, tape)
    }

    pub fn mean_all(&self) -> Var<E> {
        let n = self.numel() as f64;
        self.sum_all().scale(1.0 / n)
    }
}
