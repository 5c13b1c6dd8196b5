//! Integer lists on the command line: `4,6,8`, `5..9` (inclusive) or a mix.

pub type UsizeList = Vec<usize>;

pub fn parse_usize_list(s: &str) -> Result<UsizeList, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        if part.is_empty() {
            return Err(format!("empty entry in `{s}`"));
        }
        if let Some((lo, hi)) = part.split_once("..") {
            let lo = parse_one(lo)?;
            let hi = parse_one(hi)?;
            if lo > hi {
                return Err(format!("empty range `{part}`"));
            }
            out.extend(lo..=hi);
        } else {
            out.push(parse_one(part)?);
        }
    }
    Ok(out)
}

fn parse_one(s: &str) -> Result<usize, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a nonnegative integer"))
}
