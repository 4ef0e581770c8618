//! Shape manipulation: reshape, permute, slice, pad, concat, flip, roll.
//!
//! Reshape is zero-copy (standard layout is an invariant of every Var);
//! everything else materializes a standard-layout result.

use ndarray::{ArrayD, Axis, IxDyn, Slice, SliceInfoElem};

use crate::element::Element;
use crate::tape::{common_tape, Arr, Var};

fn slice_info(ranges: &[std::ops::Range<usize>]) -> Vec<SliceInfoElem> {
    ranges
        .iter()
        .map(|r| SliceInfoElem::from(Slice::from(r.start as isize..r.end as isize)))
        .collect()
}

/// Places `src` into a zero array of shape `full` at `offset`.
fn embed<E: Element>(src: &Arr<E>, full: &[usize], offset: &[usize]) -> Arr<E> {
    let mut out = ArrayD::zeros(IxDyn(full));
    let ranges: Vec<_> = offset
        .iter()
        .zip(src.shape())
        .map(|(&o, &len)| o..o + len)
        .collect();
    out.slice_each_axis_mut(|ax| {
        let r = &ranges[ax.axis.index()];
        Slice::from(r.start as isize..r.end as isize)
    })
    .assign(src);
    out
}

impl<E: Element> Var<E> {
    pub fn reshape(&self, shape: &[usize]) -> Var<E> {
        let n: usize = shape.iter().product();
        assert_eq!(n, self.numel(), "reshape {:?} -> {:?}", self.shape(), shape);
        let out = self
            .data
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape requires standard layout");
        let Some(tape) = common_tape(&[self]) else {
            return Var {
                data: out,
                node: None,
                tape: None,
            };
        };
        let p = self.node;
        let orig = IxDyn(self.shape());
        let id = tape.push(Box::new(move |g, sink| {
            if let Some(p) = p {
                sink(p, g.clone().into_shape_with_order(orig.clone()).unwrap());
            }
        }));
        Var::from_shared(out, id, tape)
    }

    pub fn permute(&self, axes: &[usize]) -> Var<E> {
        assert_eq!(axes.len(), self.shape().len());
        let out = self
            .data
            .view()
            .permuted_axes(IxDyn(axes))
            .as_standard_layout()
            .to_owned();
        let Some(tape) = common_tape(&[self]) else {
            return Var::constant(out);
        };
        let p = self.node;
        let mut inverse = vec![0usize; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        let id = tape.push(Box::new(move |g, sink| {
            if let Some(p) = p {
                sink(
                    p,
                    g.view()
                        .permuted_axes(IxDyn(&inverse))
                        .as_standard_layout()
                        .to_owned(),
                );
            }
        }));
        Var::tracked(out, id, tape)
    }

    /// Rectangular sub-block copy; `ranges.len()` must equal the rank.
    pub fn slice(&self, ranges: &[std::ops::Range<usize>]) -> Var<E> {
        assert_eq!(ranges.len(), self.shape().len());
        for (r, &d) in ranges.iter().zip(self.shape()) {
            assert!(r.start <= r.end && r.end <= d, "slice {ranges:?} out of bounds for {:?}", self.shape());
        }
        let info = slice_info(ranges);
        let out = self.data.slice(info.as_slice()).as_standard_layout().to_owned();
        let Some(tape) = common_tape(&[self]) else {
            return Var::constant(out);
        };
        let p = self.node;
        let full: Vec<usize> = self.shape().to_vec();
        let offset: Vec<usize> = ranges.iter().map(|r| r.start).collect();
        let id = tape.push(Box::new(move |g, sink| {
            if let Some(p) = p {
                sink(p, embed(g, &full, &offset));
            }
        }));
        Var::tracked(out, id, tape)
    }

    /// Zero padding, `(before, after)` per axis.
    pub fn pad(&self, pads: &[(usize, usize)]) -> Var<E> {
        assert_eq!(pads.len(), self.shape().len());
        let full: Vec<usize> = self
            .shape()
            .iter()
            .zip(pads)
            .map(|(&d, &(b, a))| d + b + a)
            .collect();
        let offset: Vec<usize> = pads.iter().map(|&(b, _)| b).collect();
        let out = embed(&self.data.to_owned(), &full, &offset);
        let Some(tape) = common_tape(&[self]) else {
            return Var::constant(out);
        };
        let p = self.node;
        let ranges: Vec<_> = offset
            .iter()
            .zip(self.shape())
            .map(|(&o, &len)| o..o + len)
            .collect();
        let id = tape.push(Box::new(move |g, sink| {
            if let Some(p) = p {
                let info = slice_info(&ranges);
                sink(p, g.slice(info.as_slice()).as_standard_layout().to_owned());
            }
        }));
        Var::tracked(out, id, tape)
    }

    pub fn flip(&self, axes: &[usize]) -> Var<E> {
        let mut view = self.data.view();
        for &ax in axes {
            view.invert_axis(Axis(ax));
        }
        let out = view.as_standard_layout().to_owned();
        let Some(tape) = common_tape(&[self]) else {
            return Var::constant(out);
        };
        let p = self.node;
        let axes = axes.to_vec();
        let id = tape.push(Box::new(move |g, sink| {
            if let Some(p) = p {
                let mut view = g.view();
                for &ax in &axes {
                    view.invert_axis(Axis(ax));
                }
                sink(p, view.as_standard_layout().to_owned());
            }
        }));
        Var::tracked(out, id, tape)
    }

    /// Cyclic shift along `axes` by `shifts` (positive shifts move content to
    /// higher indices, wrapping around).
    pub fn roll(&self, shifts: &[isize], axes: &[usize]) -> Var<E> {
        assert_eq!(shifts.len(), axes.len());
        let out = roll_array(&self.data.to_owned(), shifts, axes);
        let Some(tape) = common_tape(&[self]) else {
            return Var::constant(out);
        };
        let p = self.node;
        let neg: Vec<isize> = shifts.iter().map(|&s| -s).collect();
        let axes = axes.to_vec();
        let id = tape.push(Box::new(move |g, sink| {
            if let Some(p) = p {
                sink(p, roll_array(g, &neg, &axes));
            }
        }));
        Var::tracked(out, id, tape)
    }
}

pub fn roll_array<E: Element>(x: &Arr<E>, shifts: &[isize], axes: &[usize]) -> Arr<E> {
    let mut cur = x.clone();
    for (&shift, &ax) in shifts.iter().zip(axes) {
        let len = cur.shape()[ax] as isize;
        if len == 0 {
            continue;
        }
        let s = shift.rem_euclid(len) as usize;
        if s == 0 {
            continue;
        }
        let len = len as usize;
        // out = concat(tail(len-s..), head(..len-s)) along ax
        let head = cur.slice_axis(Axis(ax), Slice::from(0..(len - s) as isize)).to_owned();
        let tail = cur
            .slice_axis(Axis(ax), Slice::from((len - s) as isize..len as isize))
            .to_owned();
        cur = ndarray::concatenate(Axis(ax), &[tail.view(), head.view()])
            .unwrap()
            .as_standard_layout()
            .to_owned();
    }
    cur
}

/// Concatenation along `axis`.
pub fn concat<E: Element>(parts: &[&Var<E>], axis: usize) -> Var<E> {
    assert!(!parts.is_empty());
    let views: Vec<_> = parts.iter().map(|v| v.data.view()).collect();
    let out = ndarray::concatenate(Axis(axis), &views)
        .expect("concat: incompatible shapes")
        .as_standard_layout()
        .to_owned();
    let Some(tape) = common_tape(parts) else {
        return Var::constant(out);
    };
    let nodes: Vec<Option<usize>> = parts.iter().map(|v| v.node).collect();
    let lens: Vec<usize> = parts.iter().map(|v| v.shape()[axis]).collect();
    let id = tape.push(Box::new(move |g, sink| {
        let mut start = 0usize;
        for (node, &len) in nodes.iter().zip(&lens) {
            if let Some(p) = node {
                let part = g
                    .slice_axis(Axis(axis), Slice::from(start as isize..(start + len) as isize))
                    .as_standard_layout()
                    .to_owned();
                sink(*p, part);
            }
            start += len;
        }
    }));
    Var::tracked(out, id, tape)
}
