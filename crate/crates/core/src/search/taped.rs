use super::{backtrack, heuristic_to, select_node, SearchError, SearchResult, SearchState, UNREACHED};
use crate::autodiff::{Tape, Tensor, Var};
use crate::superpixel::RegionGraph;

/// A search recorded on a tape.
pub struct TapedSearch<'t> {
    pub result: SearchResult,
    /// Accumulated selection weights: the differentiable closed-set occupancy.
    pub soft_closed: Var<'t>,
    /// Hard closed mask in the forward pass with the gradient of `soft_closed`.
    pub st_closed: Var<'t>,
}

/// Same forward decisions as [`super::search_between`], with `g` and the
/// selection weights recorded so gradients reach `psi` (a `1 x N` row).
/// Selection indices, masks and edge weights are constants.
pub fn diff_search_taped<'t>(
    tape: &'t Tape,
    graph: &RegionGraph,
    origin: usize,
    goal: usize,
    psi: Var<'t>,
    lambda: f64,
    max_steps: usize,
) -> Result<TapedSearch<'t>, SearchError> {
    let n = graph.len();
    if psi.shape() != [1, n] {
        return Err(SearchError::LengthMismatch { expected: n, got: psi.value().len() });
    }
    let h = heuristic_to(graph, goal);
    let mut state = SearchState::new(n, origin, h.clone(), lambda);
    let h_const = tape.constant(Tensor::row(h));
    let soft = graph.soft_mask();

    let mut g = tape.constant(Tensor::row(state.g.clone()));
    let mut soft_closed = tape.constant(Tensor::zeros(1, n));
    let mut st_closed = tape.constant(Tensor::zeros(1, n));

    for step in 0.. {
        if step >= max_steps {
            return Err(SearchError::StepBudgetExceeded(max_steps));
        }
        let g_ext = g.add(psi)?;
        let g_ext_vals = g_ext.value().data().to_vec();
        let sel = match select_node(&state, &g_ext_vals) {
            Ok(s) => s,
            Err(_) => return Err(SearchError::NoPath { closed: state.closed }),
        };
        let open_mask = Tensor::row(state.open.iter().map(|&o| f64::from(o)).collect());
        let p = g_ext
            .add(h_const)?
            .scale(-1.0 / lambda)
            .masked_row_softmax(Some(&open_mask))?;
        soft_closed = soft_closed.add(p)?;
        st_closed = st_closed.add(p.one_hot_st(sel)?)?;

        state.open[sel] = false;
        state.closed[sel] = true;
        if sel == goal {
            let relaxed = state.closed.iter().zip(&soft).map(|(&c, &s)| c && s > 0.0).collect();
            let result = SearchResult {
                path: backtrack(&state.parent, goal),
                cost: g_ext_vals[goal],
                closed: state.closed,
                relaxed,
                expansions: step + 1,
                success: true,
            };
            return Ok(TapedSearch { result, soft_closed, st_closed });
        }

        let mut one_hot = vec![0.0; n];
        one_hot[sel] = 1.0;
        let mut nbr = vec![0.0; n];
        let mut w_col = vec![0.0; n];
        let mut filler = vec![UNREACHED; n];
        for &(j, w) in graph.neighbors(sel) {
            if !state.closed[j] {
                nbr[j] = 1.0;
                w_col[j] = w;
                filler[j] = 0.0;
            }
        }
        let base = g_ext.mul(tape.constant(Tensor::row(one_hot)))?.sum();
        let cand = tape
            .constant(Tensor::row(w_col))
            .add(base)?
            .mask(&Tensor::row(nbr))?
            .add(tape.constant(Tensor::row(filler)))?;
        let new_g = g.min_combine(cand)?;
        {
            let vals = new_g.value();
            for j in 0..n {
                if vals.data()[j] < state.g[j] {
                    state.g[j] = vals.data()[j];
                    state.parent[j] = Some(sel);
                    state.open[j] = true;
                }
            }
        }
        g = new_g;
    }
    unreachable!()
}
