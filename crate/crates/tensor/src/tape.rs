use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use crate::element::Element;
use crate::tensor::Tensor;

/// Maps the output gradient to one optional gradient per recorded input.
/// The flags say which inputs are tracked and therefore need a gradient.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    parents: Vec<Option<usize>>,
    backward: Option<BackwardFn<T>>,
}

/// Records differentiable operations for one backward pass.
///
/// A tape is cheap to clone (shared handle) and is not `Send`; build one per
/// step and drop it once gradients are extracted.
pub struct Tape<T> {
    nodes: Rc<RefCell<Vec<Node<T>>>>,
}

impl<T> Clone for Tape<T> {
    fn clone(&self) -> Self {
        Tape {
            nodes: Rc::clone(&self.nodes),
        }
    }
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Rc::new(RefCell::new(Vec::new())),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A tracked input whose gradient will be available after `backward`.
    pub fn leaf(&self, value: impl Into<Arc<Tensor<T>>>) -> Var<T> {
        let id = self.push(Node {
            parents: Vec::new(),
            backward: None,
        });
        Var {
            value: value.into(),
            node: Some((self.clone(), id)),
        }
    }

    fn push(&self, node: Node<T>) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    fn same(&self, other: &Tape<T>) -> bool {
        Rc::ptr_eq(&self.nodes, &other.nodes)
    }

    /// Back-propagates from a one-element `loss` recorded on this tape.
    pub fn backward(&self, loss: &Var<T>) -> Gradients<T> {
        assert_eq!(loss.value.numel(), 1, "backward needs a scalar loss");
        let loss_id = match &loss.node {
            Some((tape, id)) if tape.same(self) => *id,
            _ => panic!("loss is not recorded on this tape"),
        };
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor<T>>> = Vec::with_capacity(nodes.len());
        grads.resize_with(nodes.len(), || None);
        grads[loss_id] = Some(Tensor::full(loss.value.shape(), T::one()));

        for id in (0..=loss_id).rev() {
            let node = &nodes[id];
            let Some(backward) = &node.backward else {
                continue;
            };
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let needs: Vec<bool> = node.parents.iter().map(Option::is_some).collect();
            let parent_grads = backward(&grad, &needs);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (parent, g) in node.parents.iter().zip(parent_grads) {
                if let (Some(p), Some(g)) = (parent, g) {
                    match &mut grads[*p] {
                        Some(acc) => acc.add_assign(&g),
                        slot => *slot = Some(g),
                    }
                }
            }
        }
        Gradients { grads }
    }
}

/// Gradients of tracked leaves after a backward pass.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    /// Gradient of a tracked leaf, `None` if the loss does not depend on it.
    pub fn get(&self, var: &Var<T>) -> Option<&Tensor<T>> {
        let (_, id) = var.node.as_ref()?;
        self.grads.get(*id)?.as_ref()
    }

    /// Like [`Gradients::get`], with zeros for leaves the loss ignores.
    pub fn get_or_zeros(&self, var: &Var<T>) -> Tensor<T> {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.value.shape()))
    }
}

/// A tensor value, optionally tracked on a [`Tape`].
pub struct Var<T> {
    value: Arc<Tensor<T>>,
    node: Option<(Tape<T>, usize)>,
}

impl<T> Clone for Var<T> {
    fn clone(&self) -> Self {
        Var {
            value: Arc::clone(&self.value),
            node: self.node.clone(),
        }
    }
}

impl<T: Element> fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("shape", &self.value.shape())
            .field("tracked", &self.node.is_some())
            .finish()
    }
}

impl<T: Element> Var<T> {
    /// An untracked value; operations on constants only are not recorded.
    pub fn constant(value: impl Into<Arc<Tensor<T>>>) -> Self {
        Var {
            value: value.into(),
            node: None,
        }
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shared_value(&self) -> Arc<Tensor<T>> {
        Arc::clone(&self.value)
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    /// Same value, cut from the tape.
    pub fn detach(&self) -> Self {
        Var {
            value: Arc::clone(&self.value),
            node: None,
        }
    }

    /// Records the result of an operation. `backward` receives the output
    /// gradient and must return one entry per input, in order.
    pub(crate) fn record(
        inputs: &[&Var<T>],
        value: impl Into<Arc<Tensor<T>>>,
        backward: impl Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>> + 'static,
    ) -> Var<T> {
        let mut tape: Option<&Tape<T>> = None;
        for input in inputs {
            if let Some((t, _)) = &input.node {
                match tape {
                    None => tape = Some(t),
                    Some(existing) => assert!(
                        existing.same(t),
                        "operation mixes variables from different tapes"
                    ),
                }
            }
        }
        let value = value.into();
        let Some(tape) = tape else {
            return Var::constant(value);
        };
        let parents = inputs
            .iter()
            .map(|v| v.node.as_ref().map(|(_, id)| *id))
            .collect();
        let id = tape.push(Node {
            parents,
            backward: Some(Box::new(backward)),
        });
        Var {
            value,
            node: Some((tape.clone(), id)),
        }
    }
}
