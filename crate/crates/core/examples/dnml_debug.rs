use gca_core::augment::*;
use gca_core::embed::{train_vgae, EncoderConfig};
use gca_core::gmm::EmOptions;
use gca_core::graph::{generate_sbm, SbmSpec};
use gca_core::mdl::{select_model, SelectionGrid};
use gca_core::seed::derive_seed;
use std::collections::BTreeMap;

fn main() {
    let seed = 42u64;
    let g = generate_sbm(&SbmSpec {
        n_communities: 2, size_range: (30, 30), intra_p: 0.3, inter_p: 0.005, seed,
    }).unwrap();
    println!("graph: {} nodes {} edges", g.n_nodes(), g.n_edges());
    let mut by_dim = BTreeMap::new();
    let mut thresholds = BTreeMap::new();
    for d in [4usize, 8] {
        let cfg = EncoderConfig::for_graph(&g, d, derive_seed(seed, d as u64));
        let out = train_vgae(&g, &cfg).unwrap();
        println!("d={d}: loss {:.1} -> {:.1}, threshold {:.4}", out.loss_trace[0], out.loss_trace.last().unwrap(), out.decoder.edge_threshold());
        thresholds.insert(d, out.decoder);
        by_dim.insert(d, out.embedding.vectors().clone());
    }
    let grid = SelectionGrid::new(2..=6, [4usize, 8]).unwrap();
    let sel = select_model(&by_dim, &grid, seed, &EmOptions::default()).unwrap();
    println!("selected K={} D={}", sel.k, sel.d);
    for (k, d, cell) in &sel.table {
        println!("  k={k} d={d}: total {:.1}", cell.total());
    }
    let dmax = compute_dmax(&sel.model).unwrap();
    println!("D_max = {dmax:.2}");
    for (c, cov) in sel.model.covariances().iter().enumerate() {
        let tr: f64 = cov.diagonal().iter().sum();
        println!("  comp {c}: w={:.3} mean_norm={:.3} tr(cov)={:.4}", sel.model.weights()[c], sel.model.means()[c].norm(), tr);
    }
    let config = AugmentConfig {
        delta0: 5.0,
        delta1: Threshold::DmaxMultiple(1.0),
        m_new_nodes: 5,
        ..AugmentConfig::paper_defaults((2..=6).collect(), derive_seed(seed, 999))
    };
    let state = place_new_component(&sel.model, &config).unwrap();
    println!("augment: converged={} iters={} novelty={:.3} bound={:.4} delta1={:.3}",
        state.converged(), state.iterations, state.novelty_min, state.reliability_bound, state.delta1_resolved);
    // K_est re-check over attempts
    let emb = gca_core::embed::LatentEmbedding::new(by_dim[&sel.d].clone(), gca_core::embed::Provenance{config_hash:0,seed}).unwrap();
    let base = gca_core::embed::decode_graph(&emb, &thresholds[&sel.d], gca_core::embed::DecodeMode::AllPairs).unwrap();
    match augment_graph(&base, &emb, &thresholds[&sel.d], &sel.model, &state, &config) {
        Ok(out) => println!("augment_graph OK: k_est={} attempts={:?} G' {} nodes {} edges",
            out.k_est, out.attempts, out.graph.n_nodes(), out.graph.n_edges()),
        Err(e) => println!("augment_graph FAILED: {e}"),
    }
}
