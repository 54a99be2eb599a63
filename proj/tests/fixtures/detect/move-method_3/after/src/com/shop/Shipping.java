package com.shop;

public class Shipping {
    public int cost(int weight) {
        int base = 5;
        return base + Rates.surcharge(weight);
    }

    private static String label(String s) {
        String t = s.trim();
        return t.toUpperCase();
    }
}
