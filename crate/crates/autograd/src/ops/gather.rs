//! Row gathering (used for relative-position bias lookup).

use ndarray::{ArrayD, IxDyn};

use crate::element::Element;
use crate::tape::{common_tape, Var};

/// Gathers rows of `table [R, C]` by `indices` -> `[len, C]`.
/// Backward scatter-adds into the table rows.
pub fn index_select0<E: Element>(table: &Var<E>, indices: &[usize]) -> Var<E> {
    let ts = table.shape();
    assert_eq!(ts.len(), 2, "index_select0 expects a [R, C] table");
    let (r, c) = (ts[0], ts[1]);
    let len = indices.len();
    let mut out = ArrayD::<E>::zeros(IxDyn(&[len, c]));
    {
        let tsl = table.data.as_slice_memory_order().unwrap();
        let osl = out.as_slice_memory_order_mut().unwrap();
        for (i, &idx) in indices.iter().enumerate() {
            assert!(idx < r, "index {idx} out of range for table with {r} rows");
            osl[i * c..(i + 1) * c].copy_from_slice(&tsl[idx * c..(idx + 1) * c]);
        }
    }
    let Some(tape) = common_tape(&[table]) else {
        return Var::constant(out);
    };
    let p = table.node;
    let idxs = indices.to_vec();
    let id = tape.push(Box::new(move |g, sink| {
        if let Some(pid) = p {
            let gsl = g.as_slice_memory_order().unwrap();
            let mut dt = vec![E::zero(); r * c];
            for (i, &idx) in idxs.iter().enumerate() {
                for (acc, &gv) in dt[idx * c..(idx + 1) * c].iter_mut().zip(&gsl[i * c..(i + 1) * c])
                {
                    *acc += gv;
                }
            }
            sink(pid, ArrayD::from_shape_vec(IxDyn(&[r, c]), dt).unwrap());
        }
    }));
    Var::tracked(out, id, tape)
}
