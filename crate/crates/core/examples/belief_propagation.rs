//! Builds a small Markov network around the query node and compares loopy
//! belief propagation with exhaustive enumeration.

use sarp::corpus::PotentialTable;
use sarp::inference::{exact_marginals, loopy_bp, BpConfig, Evidence, PairwiseMarkovNetwork};

fn main() -> anyhow::Result<()> {
    let mut net = PairwiseMarkovNetwork::new();
    let q = net.add_node(0, "banana");
    let q_dup = net.add_node(1, "banana");
    let plate = net.add_node(2, "plate");
    let table = net.add_node(3, "table");
    let cup = net.add_node(4, "cup");

    let related = PotentialTable {
        present_present: 0.4,
        absent_absent: 0.2,
        absent_present: 0.3,
        present_absent: 0.1,
    }
    .smoothed();
    net.add_edge(q, q_dup, PotentialTable::QUERY_ANCHOR.as_matrix())?;
    net.add_edge(q, plate, related.as_matrix())?;
    net.add_edge(plate, table, related.as_matrix())?;
    net.add_edge(cup, table, related.as_matrix())?;
    println!("forest: {}", net.is_forest());

    let config = BpConfig::default();
    for observed in [vec![], vec![plate], vec![plate, table], vec![cup]] {
        let evidence: Evidence = observed.iter().map(|&n| (n, true)).collect();
        let bp = loopy_bp(&net, &evidence, &config)?;
        let exact = exact_marginals(&net, &evidence)?;
        println!(
            "evidence {:?}: P(banana) bp={:.6} exact={:.6} ({} sweeps)",
            observed.iter().map(|&n| &net.nodes()[n].label).collect::<Vec<_>>(),
            bp.of(q),
            exact.of(q),
            bp.iterations
        );
    }

    // Closing a cycle makes the estimate approximate.
    net.add_edge(q, cup, related.as_matrix())?;
    let evidence: Evidence = [(table, true)].into();
    let bp = loopy_bp(&net, &evidence, &config)?;
    let exact = exact_marginals(&net, &evidence)?;
    println!(
        "with a cycle: bp={:.6} exact={:.6} converged={}",
        bp.of(q),
        exact.of(q),
        bp.converged
    );
    Ok(())
}
