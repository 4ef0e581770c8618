//! Numerically stable softmax along an arbitrary axis.

use ndarray::{ArrayD, Axis};

use crate::element::Element;
use crate::tape::{common_tape, Var};

impl<E: Element> Var<E> {
    pub fn softmax(&self, axis: usize) -> Var<E> {
        let mut out = self.data.to_owned();
        softmax_inplace(&mut out, axis);
        let Some(tape) = common_tape(&[self]) else {
            return Var::constant(out);
        };
        let p = self.node;
        let y = out.clone().into_shared();
        let id = tape.push(Box::new(move |g, sink| {
            if let Some(p) = p {
                let mut dx = g.clone();
                // dx = y * (g - sum(g*y)) along axis
                for (mut dlane, ylane) in dx
                    .lanes_mut(Axis(axis))
                    .into_iter()
                    .zip(y.lanes(Axis(axis)))
                {
                    let dot: E = dlane
                        .iter()
                        .zip(ylane.iter())
                        .map(|(&gv, &yv)| gv * yv)
                        .sum();
                    for (d, &yv) in dlane.iter_mut().zip(ylane.iter()) {
                        *d = yv * (*d - dot);
                    }
                }
                sink(p, dx);
            }
        }));
        Var::tracked(out, id, tape)
    }
}

pub fn softmax_inplace<E: Element>(x: &mut ArrayD<E>, axis: usize) {
    for mut lane in x.lanes_mut(Axis(axis)) {
        let mut max = E::neg_infinity();
        for &v in lane.iter() {
            if v > max {
                max = v;
            }
        }
        let mut sum = E::zero();
        for v in lane.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = E::one() / sum;
        for v in lane.iter_mut() {
            *v = *v * inv;
        }
    }
}
