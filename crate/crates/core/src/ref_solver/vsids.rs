//! Variable activities and the priority queue over them.
//!
//! The heap orders variables by activity, highest first, with ties going to
//! the lower index. This file is also compiled standalone inside the exported
//! solver package; the marked regions are the patch points `inc_activity`
//! and `decay_activity`.

const ABSENT: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct VarOrder {
    pub activity: Vec<f64>,
    /// Amount added by the next bump.
    pub var_inc: f64,
    /// The increment is divided by this after every conflict.
    pub decay: f64,
    pub rescale_threshold: f64,
    heap: Vec<usize>,
    position: Vec<usize>,
}

impl VarOrder {
    /// All variables start in the heap with zero activity.
    pub fn new(num_vars: usize, bump_amount: f64, decay: f64, rescale_threshold: f64) -> Self {
        Self {
            activity: vec![0.0; num_vars],
            var_inc: bump_amount,
            decay,
            rescale_threshold,
            heap: (0..num_vars).collect(),
            position: (0..num_vars).collect(),
        }
    }

    // SOLSEARCH:BEGIN inc_activity
    /// Increases the activity of `var` by the current increment. When the
    /// result exceeds the rescale threshold every activity, and the increment
    /// itself, is multiplied by the threshold's reciprocal. Restores the heap
    /// order afterwards.
    pub fn inc_activity(&mut self, var: usize) {
        self.activity[var] += self.var_inc;
        if self.activity[var] > self.rescale_threshold {
            let scale = 1.0 / self.rescale_threshold;
            for a in self.activity.iter_mut() {
                *a *= scale;
            }
            self.var_inc *= scale;
        }
        if self.contains(var) {
            self.sift_up(self.position[var]);
        }
    }
    // SOLSEARCH:END inc_activity

    // SOLSEARCH:BEGIN decay_activity
    /// Called once per conflict. Growing the increment is equivalent to
    /// decaying every existing activity.
    pub fn decay_activity(&mut self) {
        self.var_inc /= self.decay;
    }
    // SOLSEARCH:END decay_activity

    pub fn contains(&self, var: usize) -> bool {
        self.position.get(var).is_some_and(|&p| p != ABSENT)
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn clear(&mut self) {
        for &v in &self.heap {
            self.position[v] = ABSENT;
        }
        self.heap.clear();
    }

    pub fn insert(&mut self, var: usize) {
        if self.contains(var) {
            return;
        }
        self.position[var] = self.heap.len();
        self.heap.push(var);
        self.sift_up(self.heap.len() - 1);
    }

    pub fn peek(&self) -> Option<usize> {
        self.heap.first().copied()
    }

    pub fn pop(&mut self) -> Option<usize> {
        let top = *self.heap.first()?;
        let last = self.heap.pop().expect("nonempty");
        self.position[top] = ABSENT;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.position[last] = 0;
            self.sift_down(0);
        }
        Some(top)
    }

    fn before(&self, a: usize, b: usize) -> bool {
        let (x, y) = (self.activity[a], self.activity[b]);
        x > y || (x == y && a < b)
    }

    fn sift_up(&mut self, mut i: usize) {
        let var = self.heap[i];
        while i > 0 {
            let parent = (i - 1) / 2;
            if !self.before(var, self.heap[parent]) {
                break;
            }
            self.heap[i] = self.heap[parent];
            self.position[self.heap[i]] = i;
            i = parent;
        }
        self.heap[i] = var;
        self.position[var] = i;
    }

    fn sift_down(&mut self, mut i: usize) {
        let var = self.heap[i];
        loop {
            let left = 2 * i + 1;
            if left >= self.heap.len() {
                break;
            }
            let right = left + 1;
            let child = if right < self.heap.len() && self.before(self.heap[right], self.heap[left]) {
                right
            } else {
                left
            };
            if !self.before(self.heap[child], var) {
                break;
            }
            self.heap[i] = self.heap[child];
            self.position[self.heap[i]] = i;
            i = child;
        }
        self.heap[i] = var;
        self.position[var] = i;
    }

    /// Checks the heap property and the position index.
    #[allow(dead_code)]
    pub fn heap_is_consistent(&self) -> bool {
        self.heap
            .iter()
            .enumerate()
            .all(|(i, &v)| self.position[v] == i && (i == 0 || !self.before(v, self.heap[(i - 1) / 2])))
    }
}
