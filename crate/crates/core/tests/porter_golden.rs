use attfusion::corpus::porter::stem;

#[test]
fn porter_matches_reference_vocabulary() {
    let text = include_str!("data/porter_golden.tsv");
    let mut n = 0;
    for (line_no, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (word, expected) = line.split_once('\t').unwrap_or_else(|| panic!("line {}: no tab", line_no + 1));
        assert_eq!(stem(word), expected, "line {}: {word}", line_no + 1);
        n += 1;
    }
    assert!(n >= 100, "{n}");
}
