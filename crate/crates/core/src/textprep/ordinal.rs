const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
];
const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];
const SCALES: [(u64, &str); 3] = [(1_000_000_000, "billion"), (1_000_000, "million"), (1_000, "thousand")];

fn below_thousand(n: u64, out: &mut Vec<&'static str>) {
    debug_assert!(n < 1000);
    if n >= 100 {
        out.push(ONES[(n / 100) as usize]);
        out.push("hundred");
    }
    let rest = n % 100;
    if rest == 0 {
        return;
    }
    if rest < 20 {
        out.push(ONES[rest as usize]);
    } else {
        out.push(TENS[(rest / 10) as usize]);
        if rest % 10 != 0 {
            out.push(ONES[(rest % 10) as usize]);
        }
    }
}

fn cardinal(mut n: u64) -> Vec<&'static str> {
    if n == 0 {
        return vec!["zero"];
    }
    let mut out = Vec::new();
    for (scale, name) in SCALES {
        if n >= scale {
            below_thousand(n / scale, &mut out);
            out.push(name);
            n %= scale;
        }
    }
    below_thousand(n, &mut out);
    out
}

fn ordinalize(word: &str) -> String {
    match word {
        "one" => "first".into(),
        "two" => "second".into(),
        "three" => "third".into(),
        "five" => "fifth".into(),
        "eight" => "eighth".into(),
        "nine" => "ninth".into(),
        "twelve" => "twelfth".into(),
        w if w.ends_with('y') => format!("{}ieth", &w[..w.len() - 1]),
        w => format!("{w}th"),
    }
}

/// English ordinal for `n`, words separated by spaces (`21` → "twenty first").
/// `None` above 999 999 999 999.
pub fn ordinal_words(n: u64) -> Option<String> {
    if n >= 1_000_000_000_000 {
        return None;
    }
    let mut words: Vec<String> = cardinal(n).into_iter().map(str::to_owned).collect();
    let last = words.pop().expect("cardinal is never empty");
    words.push(ordinalize(&last));
    Some(words.join(" "))
}
