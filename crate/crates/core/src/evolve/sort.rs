use rayon::prelude::*;

/// `a` is no worse than `b` in every objective and better in at least one.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut better = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        better |= x < y;
    }
    better
}

/// Deb's fast non-dominated sort; returns the front index of each point.
pub fn fast_nondominated_sort(objs: &[Vec<f64>]) -> Vec<usize> {
    let n = objs.len();
    // dominated sets and domination counts, built row by row in parallel
    let rows: Vec<(Vec<u32>, u32)> = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut dominated = Vec::new();
            let mut count = 0u32;
            for q in 0..n {
                if p == q {
                    continue;
                }
                if dominates(&objs[p], &objs[q]) {
                    dominated.push(q as u32);
                } else if dominates(&objs[q], &objs[p]) {
                    count += 1;
                }
            }
            (dominated, count)
        })
        .collect();
    let mut count: Vec<u32> = rows.iter().map(|r| r.1).collect();
    let mut rank = vec![0; n];
    let mut current: Vec<usize> = (0..n).filter(|&p| count[p] == 0).collect();
    let mut level = 0;
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            rank[p] = level;
            for &q in &rows[p].0 {
                let q = q as usize;
                count[q] -= 1;
                if count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        current = next;
        level += 1;
    }
    rank
}

/// Indices grouped by front, ascending within each front.
pub fn fronts_from_ranks(rank: &[usize]) -> Vec<Vec<usize>> {
    let levels = rank.iter().map(|&r| r + 1).max().unwrap_or(0);
    let mut fronts = vec![Vec::new(); levels];
    for (i, &r) in rank.iter().enumerate() {
        fronts[r].push(i);
    }
    fronts
}

/// Crowding distance of each member of one front.
pub fn crowding_distance(front: &[&[f64]]) -> Vec<f64> {
    let n = front.len();
    if n == 0 {
        return Vec::new();
    }
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = front[0].len();
    let mut dist = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..m {
        order.sort_by(|&a, &b| front[a][k].total_cmp(&front[b][k]).then(a.cmp(&b)));
        let lo = front[order[0]][k];
        let hi = front[order[n - 1]][k];
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let gap = front[order[w + 1]][k] - front[order[w - 1]][k];
            dist[order[w]] += gap / range;
        }
    }
    dist
}

/// Front index and crowding distance of every point.
pub fn rank_and_crowd(objs: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    let rank = fast_nondominated_sort(objs);
    let mut crowd = vec![0.0; objs.len()];
    for front in fronts_from_ranks(&rank) {
        let pts: Vec<&[f64]> = front.iter().map(|&i| objs[i].as_slice()).collect();
        for (i, d) in front.iter().zip(crowding_distance(&pts)) {
            crowd[*i] = d;
        }
    }
    (rank, crowd)
}
