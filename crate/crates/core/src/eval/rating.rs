use serde::{Deserialize, Serialize};

/// S&P-style long-term rating grades, best first. Index = integer encoding.
pub const GRADES: [&str; 22] = [
    "AAA", "AA+", "AA", "AA-", "A+", "A", "A-", "BBB+", "BBB", "BBB-", "BB+", "BB", "BB-", "B+", "B", "B-", "CCC+",
    "CCC", "CCC-", "CC", "C", "D",
];

/// Index of BBB-, the lowest investment grade.
pub const INVESTMENT_CUTOFF: usize = 9;

/// The 22-grade ordinal scale with its investment-grade cutoff.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingScale {
    grades: Vec<String>,
    investment_cutoff: usize,
}

impl Default for RatingScale {
    fn default() -> Self {
        Self {
            grades: GRADES.iter().map(|g| g.to_string()).collect(),
            investment_cutoff: INVESTMENT_CUTOFF,
        }
    }
}

impl RatingScale {
    pub fn len(&self) -> usize {
        self.grades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grades.is_empty()
    }

    pub fn investment_cutoff(&self) -> usize {
        self.investment_cutoff
    }

    pub fn index_of(&self, grade: &str) -> Option<usize> {
        let g = grade.trim();
        self.grades.iter().position(|x| x == g)
    }

    pub fn grade(&self, index: usize) -> Option<&str> {
        self.grades.get(index).map(String::as_str)
    }

    pub fn is_investment_grade(&self, index: usize) -> bool {
        index <= self.investment_cutoff
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bijective_with_bbb_minus_cutoff() {
        let s = RatingScale::default();
        assert_eq!(s.len(), 22);
        for (i, g) in GRADES.iter().enumerate() {
            assert_eq!(s.index_of(g), Some(i));
            assert_eq!(s.grade(i), Some(*g));
        }
        assert_eq!(s.index_of("BBB-"), Some(9));
        assert_eq!(s.investment_cutoff(), 9);
        assert!(s.is_investment_grade(9) && !s.is_investment_grade(10));
        assert_eq!(s.index_of("Z"), None);
    }
}
