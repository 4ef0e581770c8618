//! Define-by-run reverse-mode tape.
//!
//! A [`Tape`] records one forward pass; [`Tape::backward`] walks the recorded
//! nodes in reverse, accumulating gradients. [`Var`]s without a tape are
//! constants: operations on them compute values but record nothing, which is
//! the inference path.

use std::cell::RefCell;
use std::rc::Rc;

use ndarray::{ArcArray, ArrayD, ArrayViewD, IxDyn};

use crate::element::Element;

pub type Arr<E> = ArrayD<E>;
/// Shared copy-on-write array; clones are reference bumps. Var data is never
/// mutated after construction, so sharing is safe.
pub type Shared<E> = ArcArray<E, IxDyn>;

/// Gradient sink handed to backward closures: `(parent_node, contribution)`.
pub(crate) type Sink<'a, E> = dyn FnMut(usize, Arr<E>) + 'a;
pub(crate) type BackFn<E> = Box<dyn Fn(&Arr<E>, &mut Sink<E>)>;

struct Node<E: Element> {
    is_leaf: bool,
    backward: BackFn<E>,
}

pub struct Tape<E: Element> {
    inner: Rc<RefCell<Vec<Node<E>>>>,
}

impl<E: Element> Clone for Tape<E> {
    fn clone(&self) -> Self {
        Tape {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<E: Element> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Element> Tape<E> {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(Vec::new())),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn same_tape(&self, other: &Tape<E>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub(crate) fn push(&self, backward: BackFn<E>) -> usize {
        let mut nodes = self.inner.borrow_mut();
        nodes.push(Node {
            is_leaf: false,
            backward,
        });
        nodes.len() - 1
    }

    fn push_leaf(&self) -> usize {
        let mut nodes = self.inner.borrow_mut();
        nodes.push(Node {
            is_leaf: true,
            backward: Box::new(|_, _| {}),
        });
        nodes.len() - 1
    }

    /// Tracked leaf (parameter or input that needs a gradient).
    pub fn leaf(&self, data: Arr<E>) -> Var<E> {
        let id = self.push_leaf();
        Var {
            data: data.into_shared(),
            node: Some(id),
            tape: Some(self.clone()),
        }
    }

    /// Runs reverse accumulation from a scalar loss.
    ///
    /// Gradients of leaf nodes are retained in the returned [`Gradients`];
    /// interior gradients are dropped as soon as they have been consumed.
    pub fn backward(&self, loss: &Var<E>) -> Gradients<E> {
        let root = loss.node.expect("backward requires a tape-tracked loss");
        assert_eq!(
            loss.data.len(),
            1,
            "backward expects a scalar loss, got shape {:?}",
            loss.data.shape()
        );
        let nodes = self.inner.borrow();
        let mut slots: Vec<Option<Arr<E>>> = (0..nodes.len()).map(|_| None).collect();
        slots[root] = Some(ArrayD::from_elem(IxDyn(loss.data.shape()), E::one()));

        for id in (0..=root).rev() {
            if nodes[id].is_leaf {
                continue;
            }
            let Some(grad) = slots[id].take() else {
                continue;
            };
            let node = &nodes[id];
            let mut sink = |pid: usize, contrib: Arr<E>| {
                debug_assert!(pid < id, "gradient flowing forward in the tape");
                debug_assert_eq!(
                    slots.len() > pid,
                    true,
                    "gradient emitted for unknown node"
                );
                match &mut slots[pid] {
                    Some(acc) => *acc += &contrib,
                    empty => *empty = Some(contrib),
                }
            };
            (node.backward)(&grad, &mut sink);
        }

        Gradients { slots }
    }
}

/// A value in the graph, optionally attached to a tape node.
pub struct Var<E: Element> {
    pub(crate) data: Shared<E>,
    pub(crate) node: Option<usize>,
    pub(crate) tape: Option<Tape<E>>,
}

impl<E: Element> Clone for Var<E> {
    fn clone(&self) -> Self {
        Var {
            data: self.data.clone(),
            node: self.node,
            tape: self.tape.clone(),
        }
    }
}

impl<E: Element> Var<E> {
    /// Untracked value; operations involving only constants record nothing.
    pub fn constant(data: Arr<E>) -> Self {
        Var {
            data: data.into_shared(),
            node: None,
            tape: None,
        }
    }

    pub fn value(&self) -> ArrayViewD<'_, E> {
        self.data.view()
    }

    pub fn to_array(&self) -> Arr<E> {
        self.data.to_owned()
    }

    pub fn shape(&self) -> &[usize] {
        self.data.shape()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    /// Scalar extraction (single-element tensors).
    pub fn scalar(&self) -> E {
        assert_eq!(self.data.len(), 1, "scalar() on tensor of shape {:?}", self.shape());
        *self.data.iter().next().unwrap()
    }

    pub(crate) fn tracked(data: Arr<E>, node: usize, tape: Tape<E>) -> Self {
        debug_assert!(data.is_standard_layout());
        Var {
            data: data.into_shared(),
            node: Some(node),
            tape: Some(tape),
        }
    }

    pub(crate) fn from_shared(data: Shared<E>, node: usize, tape: Tape<E>) -> Self {
        Var {
            data,
            node: Some(node),
            tape: Some(tape),
        }
    }
}

/// Picks the common tape of a set of operands (if any is tracked).
pub(crate) fn common_tape<E: Element>(vars: &[&Var<E>]) -> Option<Tape<E>> {
    let mut found: Option<Tape<E>> = None;
    for v in vars {
        if let Some(t) = &v.tape {
            match &found {
                None => found = Some(t.clone()),
                Some(prev) => debug_assert!(prev.same_tape(t), "operands from different tapes"),
            }
        }
    }
    found
}

/// Leaf gradients collected by [`Tape::backward`].
pub struct Gradients<E: Element> {
    slots: Vec<Option<Arr<E>>>,
}

impl<E: Element> Gradients<E> {
    pub fn get(&self, var: &Var<E>) -> Option<&Arr<E>> {
        var.node.and_then(|id| self.slots.get(id)?.as_ref())
    }

    pub fn take(&mut self, var: &Var<E>) -> Option<Arr<E>> {
        var.node.and_then(|id| self.slots.get_mut(id)?.take())
    }
}
