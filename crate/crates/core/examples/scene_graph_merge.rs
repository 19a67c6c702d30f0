//! Folds two overlapping views into a global scene graph and prints what
//! each merge added.

use sarp::scenegraph::{GlobalSceneGraph, LocalSceneGraph, ObjectInstance, RelationshipEdge, DEFAULT_ASSOCIATION_RADIUS};

fn object(id: u32, label: &str, position: [f64; 2], location: usize) -> ObjectInstance {
    ObjectInstance {
        instance_id: id,
        label: label.into(),
        position: Some(position),
        location_id: Some(location),
    }
}

fn main() -> anyhow::Result<()> {
    let mut global = GlobalSceneGraph::new("banana")?;

    let mut first = LocalSceneGraph::new(0, 2);
    first.objects.push(object(0, "plate", [4.1, 0.1], 2));
    first.objects.push(object(1, "banana", [4.0, 0.2], 2));
    first.relations.push(RelationshipEdge {
        subject_id: 1,
        predicate: "on".into(),
        object_id: 0,
    });

    // The same plate seen again from a slightly different pose, plus a new cup.
    let mut second = LocalSceneGraph::new(1, 2);
    second.objects.push(object(0, "plate", [4.2, 0.0], 2));
    second.objects.push(object(1, "cup", [4.3, -0.3], 2));
    second.relations.push(RelationshipEdge {
        subject_id: 1,
        predicate: "near".into(),
        object_id: 0,
    });

    for (i, local) in [&first, &second, &second].into_iter().enumerate() {
        let report = global.merge_local(local, DEFAULT_ASSOCIATION_RADIUS)?;
        println!(
            "merge {i}: local->global {:?}, new instances {:?}, new relations {:?}",
            report.instance_map, report.new_instances, report.inserted_relations
        );
    }
    println!("{} nodes, {} edges", global.node_count(), global.edge_count());
    for i in 0..global.edge_count() {
        if let Some((s, p, o)) = global.relation_labels(i) {
            println!("  {s} -{p}-> {o}");
        }
    }
    println!("{}", global.to_json()?);
    Ok(())
}
