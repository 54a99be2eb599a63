package com.shop;

public class TaxRules {
    static int version() {
        return 1;
    }
}
