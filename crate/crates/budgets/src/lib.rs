//! Exact big-integer evaluation of the quantitative recursions behind the
//! minor-size and disjoint-rank bounds.
