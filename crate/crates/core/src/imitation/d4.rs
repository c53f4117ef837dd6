use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::perception::LocalGraph;

/// One of the eight symmetries of the square: optional reflection across
/// the x-axis followed by `rotation` quarter turns counter-clockwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct D4 {
    pub rotation: u8,
    pub reflect: bool,
}

impl D4 {
    pub const IDENTITY: D4 = D4 { rotation: 0, reflect: false };

    pub fn all() -> [D4; 8] {
        std::array::from_fn(|k| D4 { rotation: (k % 4) as u8, reflect: k >= 4 })
    }

    /// Exact: only sign flips and coordinate swaps.
    pub fn apply(self, v: Vec2) -> Vec2 {
        let mut v = if self.reflect { Vec2::new(v.x, -v.y) } else { v };
        for _ in 0..self.rotation % 4 {
            v = Vec2::new(-v.y, v.x);
        }
        v
    }

    /// Integer matrix `[[a, b], [c, d]]` acting on column vectors.
    fn matrix(self) -> [i8; 4] {
        let e1 = self.apply(Vec2::new(1.0, 0.0));
        let e2 = self.apply(Vec2::new(0.0, 1.0));
        [e1.x as i8, e2.x as i8, e1.y as i8, e2.y as i8]
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(self, other: D4) -> D4 {
        let [a, b, c, d] = self.matrix();
        let [e, f, g, h] = other.matrix();
        let m = [a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h];
        D4::all().into_iter().find(|x| x.matrix() == m).expect("D4 is closed under composition")
    }

    pub fn inverse(self) -> D4 {
        D4::all().into_iter().find(|x| x.compose(self) == D4::IDENTITY).expect("every element has an inverse")
    }

    /// Maps a point about `center`.
    pub fn apply_about(self, p: Vec2, center: Vec2) -> Vec2 {
        if self == D4::IDENTITY {
            p
        } else {
            center + self.apply(p - center)
        }
    }

    /// Transforms the center-relative position and velocity features of
    /// every node; degrees and structure are unchanged.
    pub fn apply_graph(self, g: &LocalGraph) -> LocalGraph {
        let mut out = g.clone();
        if self == D4::IDENTITY {
            return out;
        }
        for n in &mut out.nodes {
            let p = self.apply(Vec2::new(n.x[0], n.x[1]));
            let v = self.apply(Vec2::new(n.x[2], n.x[3]));
            n.x[0] = p.x;
            n.x[1] = p.y;
            n.x[2] = v.x;
            n.x[3] = v.y;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_turn_example() {
        assert_eq!(D4 { rotation: 1, reflect: false }.apply(Vec2::new(1.0, 2.0)), Vec2::new(-2.0, 1.0));
    }

    #[test]
    fn eight_distinct_elements_forming_a_group() {
        let all = D4::all();
        let p = Vec2::new(1.0, 2.0);
        let images: std::collections::HashSet<_> = all.iter().map(|g| (g.apply(p).x.to_bits(), g.apply(p).y.to_bits())).collect();
        assert_eq!(images.len(), 8);
        for a in all {
            for b in all {
                let c = a.compose(b);
                assert!(all.contains(&c));
                assert_eq!(c.apply(p), a.apply(b.apply(p)));
            }
            assert_eq!(a.compose(a.inverse()), D4::IDENTITY);
        }
    }
}
