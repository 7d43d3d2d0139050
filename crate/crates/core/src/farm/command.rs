use crate::atom::BuildKey;

/// The two-stage emerge invocation a worker runs for `key`: install build
/// dependencies without the package's own runtime closure, then build a
/// binary package only.
pub fn generate_emerge_commands(key: &BuildKey) -> String {
    let flags: Vec<&str> = key.useflags().iter().collect();
    let target = format!("={}-{}", key.package(), key.version());
    format!(
        "env USE=\"{}\" emerge --onlydeps --onlydeps-with-rdeps n {target} && emerge --buildpkgonly {target}",
        flags.join(" ")
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_without_flags() {
        let key = BuildKey::parse("sys-libs/ncurses-6.1-r2[]").unwrap();
        assert_eq!(
            generate_emerge_commands(&key),
            "env USE=\"\" emerge --onlydeps --onlydeps-with-rdeps n =sys-libs/ncurses-6.1-r2 && emerge --buildpkgonly =sys-libs/ncurses-6.1-r2"
        );
    }

    #[test]
    fn flags_are_sorted_and_space_joined() {
        let key = BuildKey::parse("x11-terms/rxvt-unicode-9.22[unicode3,mousewheel]").unwrap();
        assert!(generate_emerge_commands(&key).starts_with("env USE=\"mousewheel unicode3\" emerge"));
    }
}
