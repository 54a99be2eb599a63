package com.shop;

public class Payment {
    public boolean charge(int cents, String card) {
        if (card == null) {
            return false;
        }
        System.out.println("charging " + cents);
        System.out.println("card " + card);
        return true;
    }

    private static String label(String s) {
        String t = s.trim();
        return t.toUpperCase();
    }
}
