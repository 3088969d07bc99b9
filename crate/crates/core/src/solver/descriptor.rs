/// Accumulated translation state of the mild-solution recursion: for each
/// component, the sorted, disjoint, merged lattice intervals whose shifts are
/// applied to that component's Gaussian coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ShiftDescriptor {
    intervals: Vec<Vec<(usize, usize)>>,
}

impl ShiftDescriptor {
    pub fn empty(components: usize) -> Self {
        Self {
            intervals: vec![Vec::new(); components],
        }
    }

    pub fn component(&self, i: usize) -> &[(usize, usize)] {
        &self.intervals[i]
    }

    pub fn components(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.iter().all(Vec::is_empty)
    }

    /// Longest interval chain over all components.
    pub fn depth(&self) -> usize {
        self.intervals.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Appends `[a, b]` on component `i` and restores canonical form.
    pub fn with_interval(&self, i: usize, a: usize, b: usize) -> Self {
        let mut out = self.clone();
        if a < b {
            out.intervals[i].push((a, b));
            canonicalize(&mut out.intervals[i]);
        }
        out
    }
}

fn canonicalize(chain: &mut Vec<(usize, usize)>) {
    chain.retain(|(a, b)| a < b);
    chain.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(chain.len());
    for &(a, b) in chain.iter() {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    *chain = merged;
}
