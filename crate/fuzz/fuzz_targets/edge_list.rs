#![no_main]

use libfuzzer_sys::fuzz_target;
use rrldp::graph::WeightedBipartiteGraph;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(g) = WeightedBipartiteGraph::from_edge_list(text) {
        let back = WeightedBipartiteGraph::from_edge_list(&g.to_edge_list()).expect("round trip");
        assert_eq!(back, g);
        assert_eq!(g.degrees().iter().sum::<usize>(), g.edge_count());
    }
});
