package com.shop;

public class Discount {
    public int apply(int price) {
        int off = price * 10 / 100;
        return price - off;
    }

    private static String label(String s) {
        String t = s.trim();
        return t.toUpperCase();
    }
}
