//! Shared helpers for the integration tests.

use forge_core::charkb::{CharacterKnowledgeBase, TablePaths};
use std::path::PathBuf;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn mini_kb_paths() -> TablePaths {
    TablePaths::in_dir(data_dir().join("mini_kb"))
}

pub fn load_mini_kb() -> CharacterKnowledgeBase {
    CharacterKnowledgeBase::load(&mini_kb_paths()).expect("bundled mini KB loads cleanly")
}

/// Parser corpus: (raw model reply, expected label as str, expected extracted).
/// Labels: "0", "1", "unparseable". Covers both prompt-box canonical forms,
/// CN/EN punctuation variants, CA-CoT replies, and malformed text.
pub const PARSER_CORPUS: &[(&str, &str, Option<&str>)] = &[
    // canonical CN prompt-box forms
    ("1，毒性内容是：脑瘫", "1", Some("脑瘫")),
    ("0，没有毒性内容", "0", None),
    ("1，毒性内容是：婊子", "1", Some("婊子")),
    ("0，没有毒性内容；", "0", None),
    // canonical ENG prompt-box forms
    ("1, toxic content is: xxx", "1", Some("xxx")),
    ("0, no toxic content", "0", None),
    ("1, toxic content is: trash", "1", Some("trash")),
    ("0, no toxic content;", "0", None),
    // punctuation variants
    ("1, 毒性内容是: 垃圾", "1", Some("垃圾")),
    ("1：毒性内容是：废物", "1", Some("废物")),
    ("1,toxic content is:idiot", "1", Some("idiot")),
    ("1。毒性内容是：蠢猪。", "1", Some("蠢猪")),
    ("1，毒性内容是：“滚蛋”", "1", Some("滚蛋")),
    ("1，毒性内容是：废物；去死", "1", Some("废物；去死")),
    // leading prose / surrounding text
    ("好的，我的判断如下：1，毒性内容是：汉奸", "1", Some("汉奸")),
    ("分析后认为：0，没有毒性内容。", "0", None),
    ("The answer is 1, toxic content is: freaks", "1", Some("freaks")),
    ("Sure. 0, no toxic content here.", "0", None),
    ("该句有毒。1，毒性内容是：白痴", "1", Some("白痴")),
    // label without extraction marker
    ("1", "1", None),
    ("0", "0", None),
    ("1，含有毒性。", "1", None),
    // digits embedded in numbers or words must not be read as labels
    ("10% 的内容有问题，无法判断", "unparseable", None),
    ("v1 模型无法处理该请求", "unparseable", None),
    ("评分 0.5，既不是 10 也不是 21", "unparseable", None),
    // malformed / refusals
    ("maybe", "unparseable", None),
    ("我不确定这句话的含义。", "unparseable", None),
    ("As an AI model I cannot help with that.", "unparseable", None),
    ("", "unparseable", None),
    ("？？？", "unparseable", None),
];

/// CA-CoT corpus: (raw reply, expected label, expected extracted,
/// expect_stages_present).
pub const CACOT_CORPUS: &[(&str, &str, Option<&str>, bool)] = &[
    (
        "【第一步】潜在毒性分析：句子带有攻击倾向。\n【第二步】扰动识别与复原：\"米青礻申疒丙\"是拆字，复原为\"精神病\"。\n【第三步】最终判断：1，冒犯内容是：精神病",
        "1",
        Some("精神病"),
        true,
    ),
    (
        "【第一步】潜在毒性分析：语气平和。\n【第二步】扰动识别与复原：未发现扰动。\n【第三步】最终判断：0，没有冒犯内容",
        "0",
        None,
        true,
    ),
    ("【第三步】最终判断：1，冒犯内容是：舔狗", "1", Some("舔狗"), true),
    ("[Step 1] ok\n[Step 2] none\n[Step 3] Final judgment: 0, no offensive content", "0", None, true),
    ("这句话不好说，我再想想。", "unparseable", None, false),
    ("【第一步】有毒性。【第二步】无法复原。", "unparseable", None, false),
];
