//! Pulling final answers out of messy reasoning traces.
//!
//! Extraction prefers the first number after the last `####` marker, falls
//! back to the last number anywhere, and canonicalizes what it finds so
//! `$1,234.50` and `1234.5` compare equal. Traces with no number at all
//! map to a sentinel that never matches gold.

use remo::reasoner::{exact_match, extract_answer, normalize_answer, NO_ANSWER};

fn main() {
    let traces = [
        "Add the halves: 9 + 9 = 18.\n#### 18",
        "First guess 17, but recheck gives 18. #### 17\nWait, no. #### 18",
        "The total cost is $1,234.50.\n#### $1,234.50",
        "So the answer is 42 apples (no marker in this trace).",
        "I cannot solve this one.",
        "#### +7.250",
    ];
    for trace in traces {
        let answer = extract_answer(trace);
        println!("{:?}\n  -> extracted {:?}", trace, answer);
    }

    println!();
    let pairs = [
        ("1,234.50", "1234.5"),
        ("$18", "18"),
        ("+7.250", "7.25"),
        ("18", "18.0"),
        ("-3.50", "-3.5"),
    ];
    for (left, right) in pairs {
        println!(
            "normalize({left:?}) = {:?}, normalize({right:?}) = {:?}, match = {}",
            normalize_answer(left),
            normalize_answer(right),
            exact_match(&normalize_answer(left), &normalize_answer(right))
        );
    }

    // The sentinel never matches anything, including itself: a failed
    // extraction can never be scored correct.
    println!();
    println!(
        "sentinel {:?} vs itself: match = {}",
        NO_ANSWER,
        exact_match(NO_ANSWER, NO_ANSWER)
    );
}
