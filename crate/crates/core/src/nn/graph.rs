use std::cell::RefCell;
use std::sync::Arc;

use indexmap::IndexMap;

use super::tensor::Tensor;

/// Maps the upstream gradient of a node to gradients for each of its parents
/// (in the order they were registered). `None` means "no contribution".
pub type BackwardFn = Box<dyn Fn(&Tensor) -> Vec<Option<Tensor>>>;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

struct Node {
    value: Arc<Tensor>,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
    param: Option<String>,
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
/// index order is a valid topological order for backpropagation.
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    record: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    /// A graph that records backward closures for every differentiable node.
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            record: true,
        }
    }

    /// A graph that never records backward closures.
    pub fn inference() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            record: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var(nodes.len() - 1)
    }

    pub fn constant(&self, value: Tensor) -> Var {
        self.push(Node {
            value: Arc::new(value),
            parents: Vec::new(),
            backward: None,
            requires_grad: false,
            param: None,
        })
    }

    /// A leaf that receives a gradient but is not a named parameter.
    pub fn input(&self, value: Tensor) -> Var {
        self.push(Node {
            value: Arc::new(value),
            parents: Vec::new(),
            backward: None,
            requires_grad: self.record,
            param: None,
        })
    }

    /// A named trainable leaf. The tensor is shared, not copied.
    pub fn param(&self, name: &str, value: Arc<Tensor>) -> Var {
        self.push(Node {
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad: self.record,
            param: Some(name.to_string()),
        })
    }

    pub fn value(&self, v: Var) -> Arc<Tensor> {
        Arc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    /// Register an op result. `make_backward` is only invoked when some
    /// parent needs a gradient, so inference never pays for closure captures.
    pub fn custom<F>(&self, value: Tensor, parents: &[Var], make_backward: F) -> Var
    where
        F: FnOnce() -> BackwardFn,
    {
        let requires_grad = self.record && parents.iter().any(|p| self.requires_grad(*p));
        let backward = requires_grad.then(make_backward);
        self.push(Node {
            value: Arc::new(value),
            parents: if requires_grad {
                parents.iter().map(|p| p.0).collect()
            } else {
                Vec::new()
            },
            backward,
            requires_grad,
            param: None,
        })
    }

    /// Backpropagate from scalar roots, each seeded with its own weight.
    pub fn backward(&self, seeds: &[(Var, f32)]) -> Gradients {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        for &(v, weight) in seeds {
            let node = &nodes[v.0];
            if !node.requires_grad {
                continue;
            }
            let seed = Tensor::full(node.value.shape(), weight);
            accumulate(&mut grads[v.0], seed);
        }
        let mut leaves = Vec::new();
        for i in (0..nodes.len()).rev() {
            let node = &nodes[i];
            let Some(grad) = grads[i].take() else {
                continue;
            };
            match &node.backward {
                Some(f) => {
                    let parent_grads = f(&grad);
                    debug_assert_eq!(parent_grads.len(), node.parents.len());
                    for (&p, pg) in node.parents.iter().zip(parent_grads) {
                        if let Some(pg) = pg {
                            if nodes[p].requires_grad {
                                debug_assert_eq!(pg.shape(), nodes[p].value.shape());
                                accumulate(&mut grads[p], pg);
                            }
                        }
                    }
                }
                None => leaves.push((i, grad)),
            }
        }
        let mut by_node = IndexMap::new();
        let mut by_param = IndexMap::new();
        for (i, g) in leaves.into_iter().rev() {
            match &nodes[i].param {
                Some(name) => match by_param.get_mut(name) {
                    Some(acc) => Tensor::add_assign(acc, &g),
                    None => {
                        by_param.insert(name.clone(), g);
                    }
                },
                None => {
                    by_node.insert(i, g);
                }
            }
        }
        Gradients { by_node, by_param }
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

/// Leaf gradients produced by [`Graph::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    by_node: IndexMap<usize, Tensor>,
    by_param: IndexMap<String, Tensor>,
}

impl Gradients {
    /// Gradient of a non-parameter leaf created with [`Graph::input`].
    pub fn input(&self, v: Var) -> Option<&Tensor> {
        self.by_node.get(&v.0)
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.by_param.get(name)
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.by_param.iter().map(|(k, v)| (k.as_str(), v))
    }
}
