//! Builds the reachability graph of a small net with silent routing, reduces it
//! to the markings reachable right after a visible event and prints the mask
//! attached to each reduced node.

use reachmask::petri::parse_text_net;
use reachmask::reach::{ReachabilityGraph, ReducedReachabilityGraph};

const NET: &str = "
place start 1
place p1
place p2
place p3
place end
transition register register
transition skip ~
transition check check
transition decide decide
transition retry ~
arc start register
arc register p1
arc p1 skip
arc skip p2
arc p1 check
arc check p2
arc p2 decide
arc decide p3
arc p3 retry
arc retry p1
arc p3 close
transition close close
arc close end
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = parse_text_net(NET)?;
    let report = net.validate_workflow_net();
    assert!(report.is_valid(), "{report}");

    let rg = ReachabilityGraph::build(&net, 1_000)?;
    let rgr = ReducedReachabilityGraph::build(&rg, &net);
    println!(
        "{} markings, {} edges; reduced to {} nodes, {} edges",
        rg.num_nodes(),
        rg.edges().len(),
        rgr.num_nodes(),
        rgr.edges().len()
    );

    let places = net.places();
    for node in 0..rgr.num_nodes() {
        let marking: Vec<&str> = rgr
            .marking(node)
            .tokens()
            .iter()
            .zip(places)
            .filter(|(&n, _)| n > 0)
            .map(|(_, p)| p.as_str())
            .collect();
        let mask = rgr.mask_for_node(node);
        let allowed: Vec<&str> = mask.events().map(|e| net.alphabet()[e].as_str()).collect();
        println!(
            "node {node} [{}] allows {{{}}}{}",
            marking.join(", "),
            allowed.join(", "),
            if rgr.completes(node) {
                ", may end here"
            } else {
                ""
            }
        );
    }
    println!("\n{}", rgr.to_dot(&net));
    Ok(())
}
