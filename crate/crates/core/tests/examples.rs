//! Runs every example program as a test.

macro_rules! example {
    ($name:ident) => {
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", stringify!($name), ".rs"));
        }

        #[test]
        fn $name() {
            $name::main();
        }
    };
}

example!(align);
example!(confusion_network);
example!(gradient_check);
example!(noise_channel);
example!(pretrain_lm);
example!(confusion_finetune);
example!(intent_classifier);
example!(experiment);
