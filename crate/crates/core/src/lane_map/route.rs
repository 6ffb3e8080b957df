use super::{Heading, LaneGraph, LaneSegment, MapError, RoutePath};

/// Resolves a list of cardinal directions to the unique drivable path.
///
/// The path starts on a non-turn segment travelling `directions[0]` that has
/// no same-direction non-turn predecessor, follows same-direction successors,
/// and enters a turn segment whenever the next direction differs. It ends
/// once the final direction has no further successors.
pub fn resolve_route(graph: &LaneGraph, directions: &[Heading]) -> Result<RoutePath, MapError> {
    if directions.is_empty() {
        return Err(MapError::EmptyRoute);
    }
    let mut dirs: Vec<Heading> = directions.to_vec();
    dirs.dedup();

    let mut complete: Vec<Vec<String>> = Vec::new();
    for start in graph.segments() {
        if start.kind.is_turn() || start.heading != dirs[0] {
            continue;
        }
        let continues_lane = graph.predecessors(&start.id).any(|p| !p.kind.is_turn() && p.heading == dirs[0]);
        if continues_lane {
            continue;
        }
        let mut stack = vec![start.id.clone()];
        walk(graph, &dirs, 0, &mut stack, &mut complete);
    }

    match complete.len() {
        0 => Err(MapError::NoRoute(directions.to_vec())),
        1 => {
            let ids = complete.pop().unwrap();
            Ok(build_path(graph, &ids))
        }
        _ => Err(MapError::AmbiguousRoute { route: directions.to_vec(), candidates: complete }),
    }
}

fn walk(graph: &LaneGraph, dirs: &[Heading], phase: usize, stack: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    let current = stack.last().unwrap().clone();
    let next: Vec<&LaneSegment> = graph.successors(&current).collect();
    let mut extended = false;
    for seg in next {
        if stack.contains(&seg.id) {
            continue;
        }
        let phase_next = if !seg.kind.is_turn() && seg.heading == dirs[phase] {
            phase
        } else if seg.kind.is_turn() && phase + 1 < dirs.len() && seg.heading == dirs[phase + 1] {
            phase + 1
        } else {
            continue;
        };
        if !seg.kind.is_turn() {
            extended = true;
        }
        stack.push(seg.id.clone());
        walk(graph, dirs, phase_next, stack, out);
        stack.pop();
    }
    if !extended && phase + 1 == dirs.len() {
        out.push(stack.clone());
    }
}

fn build_path(graph: &LaneGraph, ids: &[String]) -> RoutePath {
    let segments: Vec<(String, Vec<[f64; 2]>)> =
        ids.iter().map(|id| (id.clone(), graph.segment(id).unwrap().centerline.clone())).collect();
    let mut path = RoutePath::from_segments(&segments);
    if let Some(turn) = ids.iter().find(|id| graph.segment(id).unwrap().kind.is_turn()) {
        let (start, end) = path.segment_range(turn).unwrap();
        path.set_landmark("turn_start", start);
        path.set_landmark("turn_end", end);
        path.set_landmark("stop_line", start);
    }
    path
}
