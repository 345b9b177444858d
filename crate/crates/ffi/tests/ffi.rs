use std::ffi::{CStr, CString};
use std::ptr;

use bws_ffi::*;

fn cstr(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = bws_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn generate_score_and_save_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let terms_path = dir.path().join("terms.txt");
    let words: Vec<String> = (0..12).map(|i| format!("word{i}")).collect();
    std::fs::write(&terms_path, words.join("\n")).unwrap();

    unsafe {
        let mut terms = ptr::null_mut();
        assert_eq!(bws_terms_load(cstr(&terms_path).as_ptr(), &mut terms), BwsStatus::Ok);
        assert_eq!(bws_terms_count(terms), 12);

        let mut design = ptr::null_mut();
        assert_eq!(bws_design_generate(terms, 2.0, 9, &mut design), BwsStatus::Ok);
        assert_eq!(bws_design_count(design), 24);
        let mut passed = 0;
        assert_eq!(bws_design_verify(design, terms, &mut passed), BwsStatus::Ok);
        assert_eq!(passed, 1);

        let tuples_path = dir.path().join("tuples.csv");
        assert_eq!(bws_design_save(design, cstr(&tuples_path).as_ptr()), BwsStatus::Ok);

        // every annotator picks the first listed term as best, the last as worst
        let text = std::fs::read_to_string(&tuples_path).unwrap();
        let mut csv = String::from("tuple_id,annotator_id,best,worst,timestamp\n");
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            for a in ["a1", "a2"] {
                csv.push_str(&format!("{},{a},{},{},\n", f[0], f[1], f[4]));
            }
        }
        let responses_path = dir.path().join("responses.csv");
        std::fs::write(&responses_path, csv).unwrap();

        let mut responses = ptr::null_mut();
        assert_eq!(
            bws_responses_load(cstr(&responses_path).as_ptr(), design, 0, &mut responses),
            BwsStatus::Ok
        );
        assert_eq!(bws_responses_count(responses), 48);

        let mut lexicon = ptr::null_mut();
        assert_eq!(bws_score(design, responses, 0, &mut lexicon), BwsStatus::Ok);
        assert_eq!(bws_lexicon_len(lexicon), 12);
        let mut prev = f64::INFINITY;
        for i in 0..12 {
            let (mut id, mut score) = (ptr::null(), 0.0);
            assert_eq!(bws_lexicon_entry(lexicon, i, &mut id, &mut score), BwsStatus::Ok);
            assert!(CStr::from_ptr(id).to_str().unwrap().starts_with('t'));
            assert!(score <= prev && (-1.0..=1.0).contains(&score));
            prev = score;
        }
        let (mut id, mut score) = (ptr::null(), 0.0);
        assert_eq!(bws_lexicon_entry(lexicon, 12, &mut id, &mut score), BwsStatus::Invalid);

        let lex_path = dir.path().join("lex.tsv");
        assert_eq!(bws_lexicon_save(lexicon, terms, cstr(&lex_path).as_ptr()), BwsStatus::Ok);
        let saved = std::fs::read_to_string(&lex_path).unwrap();
        assert_eq!(saved.lines().count(), 12);
        assert!(saved.lines().all(|l| l.starts_with("word")));

        let (mut s, mut p) = (0.0, 0.0);
        assert_eq!(bws_split_half(design, responses, 4, 1, &mut s, &mut p), BwsStatus::Ok);
        assert!((-1.0..=1.0).contains(&s) && (-1.0..=1.0).contains(&p));

        bws_lexicon_free(lexicon);
        bws_responses_free(responses);
        bws_design_free(design);
        bws_terms_free(terms);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut terms = ptr::null_mut();
        let missing = CString::new("/nonexistent/terms.txt").unwrap();
        assert_eq!(bws_terms_load(missing.as_ptr(), &mut terms), BwsStatus::Io);
        assert!(last_error().contains("nonexistent"));
        assert!(terms.is_null());

        assert_eq!(bws_terms_load(ptr::null(), &mut terms), BwsStatus::NullArgument);

        let dir = tempfile::tempdir().unwrap();
        let few = dir.path().join("few.txt");
        std::fs::write(&few, "a\nb\nc\nd\ne").unwrap();
        assert_eq!(bws_terms_load(cstr(&few).as_ptr(), &mut terms), BwsStatus::Ok);
        let mut design = ptr::null_mut();
        assert_eq!(bws_design_generate(terms, 2.0, 0, &mut design), BwsStatus::Invalid);
        assert!(design.is_null());
        bws_terms_free(terms);

        bws_terms_free(ptr::null_mut());
        bws_design_free(ptr::null_mut());
        bws_lexicon_free(ptr::null_mut());
        bws_responses_free(ptr::null_mut());
    }
}

#[test]
fn statistics() {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [1.0, 3.0, 2.0, 5.0, 4.0];
    let mut out = 0.0;
    unsafe {
        assert_eq!(bws_spearman(a.as_ptr(), b.as_ptr(), 5, &mut out), BwsStatus::Ok);
        assert!((out - 0.8).abs() < 1e-12);
        assert_eq!(bws_pearson(a.as_ptr(), a.as_ptr(), 5, &mut out), BwsStatus::Ok);
        assert!((out - 1.0).abs() < 1e-12);
        let flat = [2.0; 5];
        assert_eq!(bws_pearson(a.as_ptr(), flat.as_ptr(), 5, &mut out), BwsStatus::Degenerate);

        assert_eq!(
            bws_binom_lower_bound(90, 100, 0.999, BwsBoundMethod::ClopperPearson, &mut out),
            BwsStatus::Ok
        );
        // reference values from scipy: beta.ppf(0.001, 90, 11) and the closed-form Wilson bound
        assert!((out - 0.7753298801677749).abs() < 1e-9, "{out}");
        assert_eq!(bws_binom_lower_bound(90, 100, 0.999, BwsBoundMethod::Wilson, &mut out), BwsStatus::Ok);
        assert!((out - 0.7699413528738963).abs() < 1e-12, "{out}");
        assert_eq!(
            bws_binom_lower_bound(5, 4, 0.999, BwsBoundMethod::Wilson, &mut out),
            BwsStatus::Invalid
        );
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(bws_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_api_and_compiles_as_c() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/bws.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["bws_terms_load", "bws_score", "bws_lexicon_entry", "bws_binom_lower_bound", "typedef struct BwsLexicon BwsLexicon"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{}\"\nint main(void) {{ double b; return bws_binom_lower_bound(1, 2, 0.9, BWS_BOUND_METHOD_WILSON, &b) == BWS_STATUS_OK ? 0 : 1; }}\n",
            header.display()
        ),
    )
    .unwrap();
    match std::process::Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"]).arg(&src).status() {
        Ok(status) => assert!(status.success(), "header does not compile as C99"),
        Err(e) => eprintln!("skipping C compile check: {e}"),
    }
}
